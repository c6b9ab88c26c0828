use std::fs;
use std::path::Path;

use dlmix::io::*;
use dlmix::{Error, TimeSeriesPanel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONFIG_KEYS: [&str; 19] = [
    "seed",
    "algorithm",
    "k",
    "iterations",
    "burn_in",
    "thin",
    "tol",
    "max_iter",
    "mc_size",
    "delta_mode",
    "delta",
    "c0",
    "relabel_time",
    "relabel_coord",
    "phi_prior_shape",
    "phi_prior_rate",
    "sir_proposals",
    "epsilon_w",
    "cluster",
];

fn config(algorithm: &str, extra: &str) -> RunConfig {
    RunConfig::from_toml_str(&format!(
        "seed = 5\nalgorithm = \"{algorithm}\"\n{extra}\n\
         [[cluster]]\nfamily = \"local_linear\"\ndiscount = 0.7\n\
         [[cluster]]\nfamily = \"local_linear\"\ndiscount = 0.7\n"
    ))
    .unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn panel_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, t_len, m) = (4, 7, 3);
    let values: Vec<f64> = (0..n * t_len * m).map(|_| rng.random_range(-1e6..1e6) / 3.0).collect();
    let ids = (0..n).map(|i| format!("id{i}")).collect();
    let panel = TimeSeriesPanel::new(ids, t_len, m, values).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    write_panel(&path, &panel, None).unwrap();
    let back = load_panel(&path).unwrap();
    assert_eq!(back, panel);
}

#[test]
fn country_shaped_panel_loads() {
    // 27 series of 26 yearly values, rows shuffled as an export might be
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lines = Vec::new();
    for c in 0..27 {
        for year in 1..=26 {
            lines.push(format!("C{c:02},{year},{:.3}", 3.0 + rng.random_range(0.0..20.0)));
        }
    }
    for i in (1..lines.len()).rev() {
        lines.swap(i, rng.random_range(0..=i));
    }
    let text = format!("series_id,time_index,unemployment\n{}\n", lines.join("\n"));
    let panel = read_panel(text.as_bytes()).unwrap();
    assert_eq!((panel.n_series(), panel.n_times(), panel.n_dims()), (27, 26, 1));
    assert_eq!(panel.id(0), "C00");
    let first = lines.iter().find(|l| l.starts_with("C05,17,")).unwrap();
    let v: f64 = first.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(panel.obs(5, 16), &[v]);
}

#[test]
fn malformed_panels_are_data_errors() {
    let cases = [
        "id,time_index,value\na,1,1\n",
        "series_id,time_index,value\na,1,1\na,1,2\n",
        "series_id,time_index,value\na,1,1\na,3,2\n",
        "series_id,time_index,value\na,0,1\n",
        "series_id,time_index,value\na,1,x\n",
        "series_id,time_index,value\na,1,NaN\n",
        "series_id,time_index,value\n",
        "series_id,time_index,value\na,1,1,2\n",
    ];
    for text in cases {
        let err = read_panel(text.as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{text:?}: {err}");
    }
    let err = read_panel("series_id,time_index,value\na,1,1\nb,1,x\n".as_bytes()).unwrap_err();
    assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
}

#[test]
fn bad_configs_are_config_errors() {
    let base = "seed = 1\nalgorithm = \"static_em\"\n";
    let cluster = "[[cluster]]\nfamily = \"random_walk\"\ndiscount = 0.9\n";
    let cases = [
        format!("algorithm = \"static_em\"\n{cluster}"),
        format!("{base}colour = 3\n{cluster}"),
        format!("seed = 1\nalgorithm = \"kmeans\"\n{cluster}"),
        base.to_string(),
        format!("{base}[[cluster]]\nfamily = \"random_walk\"\ndiscount = 1.5\n"),
        format!("{base}[[cluster]]\ndiscount = 0.9\n"),
        format!("{base}k = 3\n{cluster}{cluster}"),
        format!("{base}tol = -1\n{cluster}"),
        format!("seed = 1\nalgorithm = \"static_gibbs\"\niterations = 10\nburn_in = 20\n{cluster}"),
        format!("{base}c0 = [1.0, 2.0, 3.0]\n{cluster}{cluster}"),
        "seed = ".to_string(),
    ];
    for text in &cases {
        let err = RunConfig::from_toml_str(text).and_then(|c| c.validate()).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{text:?}: {err}");
    }
}

#[test]
fn config_against_panel_is_checked() {
    let g = generate(GeneratedKind::Static, 1).unwrap();
    let one = g.panel.subset(&[0]).unwrap();
    assert_eq!(run(&config("static_em", ""), &one).unwrap_err().exit_code(), 2);
    assert_eq!(run(&config("static_em", "relabel_time = 61"), &g.panel).unwrap_err().exit_code(), 2);
    let c = config("dynamic_sem", "delta_mode = \"fixed\"\ndelta = [0.5, 0.5]");
    assert_eq!(run(&c, &g.panel).unwrap_err().exit_code(), 2);
}

fn check_outputs(dir: &Path, n: usize, k: usize, t_len: usize, dynamic: bool) {
    let means = rows(&dir.join(MEANS_FILE));
    assert_eq!(means.len(), k * t_len);
    for r in &means {
        let (mean, sd, lo, hi): (f64, f64, f64, f64) =
            (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap(), r[6].parse().unwrap());
        assert!(sd >= 0.0);
        assert!((lo - (mean - 2.0 * sd)).abs() < 1e-9 && (hi - (mean + 2.0 * sd)).abs() < 1e-9);
    }
    let memberships = rows(&dir.join(MEMBERSHIPS_FILE));
    assert_eq!(memberships.len(), if dynamic { n * t_len * k } else { n * k });
    let eta_col = if dynamic { 3 } else { 2 };
    for chunk in memberships.chunks(k) {
        let total: f64 = chunk.iter().map(|r| r[eta_col].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let manifest: toml::Table = fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap().parse().unwrap();
    let cfg = manifest["config"].as_table().unwrap();
    for key in CONFIG_KEYS {
        assert!(cfg.contains_key(key), "manifest lacks {key}");
    }
    assert_eq!(cfg.len(), CONFIG_KEYS.len());
    let echoed = RunConfig::from_manifest_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(echoed, RunConfig::from_toml_str(&toml::to_string(cfg).unwrap()).unwrap());
    assert!(echoed.max_iter.is_some() && echoed.relabel_time.is_some() && echoed.c0.is_some());
    let listed = manifest["run"]["files"].as_array().unwrap();
    for f in listed {
        assert!(dir.join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn every_algorithm_emits_complete_outputs() {
    let g = generate(GeneratedKind::Dynamic, 2).unwrap();
    let panel = g.panel.subset(&[0, 1, 2, 3, 10, 11, 12, 13, 20, 21]).unwrap();
    let cases = [
        ("static_em", "", false),
        ("static_gibbs", "iterations = 60\nburn_in = 20", false),
        ("dynamic_sem", "mc_size = 3", true),
        ("dynamic_gibbs", "iterations = 40\nburn_in = 10\ndelta_mode = \"estimate\"", true),
        ("independent", "", true),
    ];
    for (algorithm, extra, dynamic) in cases {
        let cfg = config(algorithm, extra);
        let result = run(&cfg, &panel).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_results(&result, dir.path()).unwrap();
        assert!(files.iter().all(|f| f.exists()));
        check_outputs(dir.path(), 10, 2, 60, dynamic);
        assert_eq!(dir.path().join(DELTA_FILE).exists(), dynamic, "{algorithm}");
        assert_eq!(dir.path().join(TRACE_FILE).exists(), algorithm.ends_with("gibbs"), "{algorithm}");
    }
}

#[test]
fn multivariate_means_have_one_block_per_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, t_len, m) = (6, 12, 2);
    let values: Vec<f64> = (0..n * t_len * m)
        .map(|x| if x / (t_len * m) < 3 { 0.0 } else { 4.0 } + 0.1 * rng.random::<f64>())
        .collect();
    let panel = TimeSeriesPanel::new((0..n).map(|i| format!("s{i}")).collect(), t_len, m, values).unwrap();
    let cfg = RunConfig::from_toml_str(
        "seed = 1\nalgorithm = \"static_em\"\n[[cluster]]\nfamilies = [\"random_walk\", \"local_linear\"]\ndiscount = 0.9\n\
         [[cluster]]\nfamilies = [\"random_walk\", \"local_linear\"]\ndiscount = 0.9\n",
    )
    .unwrap();
    let result = run(&cfg, &panel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&result, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join(MEANS_FILE)).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.len(), 3 + 4 * m);
    assert!(header.contains(&"mean_2".to_string()));
    assert_eq!(rdr.records().count(), 2 * t_len);
}

#[test]
fn same_seed_same_files() {
    let g = generate(GeneratedKind::Dynamic, 5).unwrap();
    let panel = g.panel.subset(&[0, 1, 10, 11, 20]).unwrap();
    for (algorithm, extra) in [("static_gibbs", "iterations = 50\nburn_in = 10"), ("dynamic_sem", "mc_size = 2")] {
        let cfg = config(algorithm, extra);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        emit_results(&run(&cfg, &panel).unwrap(), a.path()).unwrap();
        emit_results(&run(&cfg, &panel).unwrap(), b.path()).unwrap();
        for f in [MEANS_FILE, MEMBERSHIPS_FILE, STATES_FILE, PRECISIONS_FILE, CONVERGENCE_FILE] {
            let (x, y) = (fs::read(a.path().join(f)).ok(), fs::read(b.path().join(f)).ok());
            assert_eq!(x, y, "{algorithm} {f}");
        }
    }
}

#[test]
fn generator_is_deterministic_and_labelled() {
    let a = generate(GeneratedKind::Dynamic, 9).unwrap();
    let b = generate(GeneratedKind::Dynamic, 9).unwrap();
    let c = generate(GeneratedKind::Dynamic, 10).unwrap();
    assert_eq!(a.panel, b.panel);
    assert_ne!(a.panel, c.panel);
    assert_eq!((a.panel.n_series(), a.panel.n_times()), (22, GEN_T));
    assert_eq!(a.labels[21][GEN_SWITCH_T - 2], 1);
    assert_eq!(a.labels[21][GEN_SWITCH_T - 1], 0);
    // the static panel is the first twenty series of the dynamic one
    let s = generate(GeneratedKind::Static, 9).unwrap();
    assert_eq!(s.panel, a.panel.subset(&(0..20).collect::<Vec<_>>()).unwrap());
    let o = generate(GeneratedKind::Outlier, 9).unwrap();
    assert_eq!(o.outliers.len(), 3);
    for &(i, t) in &o.outliers {
        assert!((o.panel.obs(i, t - 1)[0] - cluster_mean(0, t)).abs() < 6.0 * GEN_SD);
        assert_eq!(o.labels[i][t - 1], 1);
    }

    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.csv");
    o.write_truth(&truth).unwrap();
    let recs = rows(&truth);
    assert_eq!(recs.len(), 20 * GEN_T);
    assert_eq!(recs.iter().filter(|r| &r[3] == "1").count(), 3);
    assert!(recs.iter().all(|r| &r[2] == "1" || &r[2] == "2"));
}

#[test]
fn cluster_means_touch_at_the_switch_time() {
    let gap = |t: usize| cluster_mean(1, t) - cluster_mean(0, t);
    let closest = (1..=GEN_T).min_by(|&a, &b| gap(a).total_cmp(&gap(b))).unwrap();
    assert_eq!(closest, GEN_SWITCH_T);
    assert!((1..=GEN_T).all(|t| gap(t) > 10.0 * GEN_SD));
}
