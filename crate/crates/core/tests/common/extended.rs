//! Direct evaluation of products of densities without underflow, by carrying
//! a separate binary exponent next to an f64 mantissa.

#[derive(Debug, Clone, Copy)]
pub struct ExtFloat {
    mant: f64,
    exp: i64,
}

fn split(x: f64) -> (f64, i64) {
    if x == 0.0 {
        return (0.0, 0);
    }
    let e = x.abs().log2().floor() as i64;
    let mut m = x / 2f64.powi(e as i32);
    let mut e = e;
    while m.abs() >= 2.0 {
        m /= 2.0;
        e += 1;
    }
    while m.abs() < 1.0 {
        m *= 2.0;
        e -= 1;
    }
    (m, e)
}

impl ExtFloat {
    pub fn one() -> Self {
        Self { mant: 1.0, exp: 0 }
    }

    pub fn zero() -> Self {
        Self { mant: 0.0, exp: 0 }
    }

    pub fn from_f64(x: f64) -> Self {
        let (mant, exp) = split(x);
        Self { mant, exp }
    }

    pub fn mul_f64(self, x: f64) -> Self {
        let (m, e) = split(x);
        let (mm, ee) = split(self.mant * m);
        Self {
            mant: mm,
            exp: self.exp + e + ee,
        }
    }

    pub fn add(self, other: Self) -> Self {
        if self.mant == 0.0 {
            return other;
        }
        if other.mant == 0.0 {
            return self;
        }
        let (big, small) = if self.exp >= other.exp { (self, other) } else { (other, self) };
        let shift = (big.exp - small.exp).min(2000) as i32;
        let sum = big.mant + small.mant * 2f64.powi(-shift);
        let (m, e) = split(sum);
        Self {
            mant: m,
            exp: big.exp + e,
        }
    }

    /// `self / other` as an ordinary float.
    pub fn ratio(self, other: Self) -> f64 {
        let diff = (self.exp - other.exp).clamp(-2000, 2000) as i32;
        self.mant / other.mant * 2f64.powi(diff)
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0.0
    }
}

/// Normal density written out directly.
pub fn normal_pdf(y: f64, mean: f64, precision: f64) -> f64 {
    (precision / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * precision * (y - mean).powi(2)).exp()
}
