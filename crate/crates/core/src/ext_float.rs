//! A binary64 mantissa paired with a 64-bit exponent.
//!
//! `ExtFloat` keeps the 53-bit precision of `f64` but removes its exponent
//! range limit, so Gibbs kernels such as `exp(-3 / 1e-4)` and the matching
//! huge scaling factors stay representable without switching to the log
//! domain. Values are stored normalized: the mantissa lies in `±[0.5, 1)`,
//! zero is `(0.0, 0)`, and non-finite values keep their `f64` mantissa with
//! exponent zero.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Num, One, Zero};

use crate::scalar::Scalar;

const EXP_LIMIT: i64 = 1 << 62;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;

#[derive(Clone, Copy, PartialEq)]
pub struct ExtFloat {
    mant: f64,
    exp: i64,
}

/// `2^e` for `e` within the normal `f64` exponent range.
#[inline]
fn pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

impl ExtFloat {
    pub const ZERO: ExtFloat = ExtFloat { mant: 0.0, exp: 0 };
    pub const ONE: ExtFloat = ExtFloat { mant: 0.5, exp: 1 };

    fn normalize(mant: f64, exp: i64) -> ExtFloat {
        if mant == 0.0 {
            return ExtFloat::ZERO;
        }
        if !mant.is_finite() {
            return ExtFloat { mant, exp: 0 };
        }
        let (mut m, mut e) = (mant, exp);
        let mut bits = m.to_bits();
        let mut biased = ((bits >> 52) & 0x7ff) as i64;
        if biased == 0 {
            // subnormal mantissa
            m *= pow2(54);
            e -= 54;
            bits = m.to_bits();
            biased = ((bits >> 52) & 0x7ff) as i64;
        }
        let e = e.saturating_add(biased - 1022);
        if e > EXP_LIMIT {
            return ExtFloat { mant: f64::INFINITY.copysign(m), exp: 0 };
        }
        if e < -EXP_LIMIT {
            return ExtFloat::ZERO;
        }
        let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
        ExtFloat { mant: m, exp: e }
    }

    /// Mantissa in `±[0.5, 1)` and binary exponent.
    pub fn parts(self) -> (f64, i64) {
        (self.mant, self.exp)
    }

    /// Base-10 logarithm of the magnitude, valid far outside the `f64` range.
    pub fn log10_abs(self) -> f64 {
        self.mant.abs().log10() + self.exp as f64 * std::f64::consts::LOG10_2
    }

    fn to_f64_inner(self) -> f64 {
        if self.exp > 1024 {
            return f64::INFINITY.copysign(self.mant);
        }
        if self.exp < -1100 {
            return 0.0_f64.copysign(self.mant);
        }
        let half = self.exp / 2;
        self.mant * pow2(half) * pow2(self.exp - half)
    }

    fn trunc(self) -> ExtFloat {
        if !self.mant.is_finite() || self.exp >= 53 {
            self
        } else if self.exp <= 0 {
            ExtFloat::ZERO
        } else {
            ExtFloat::normalize((self.mant * pow2(self.exp)).trunc(), 0)
        }
    }
}

impl From<f64> for ExtFloat {
    fn from(x: f64) -> Self {
        ExtFloat::normalize(x, 0)
    }
}

impl Add for ExtFloat {
    type Output = ExtFloat;
    fn add(self, rhs: ExtFloat) -> ExtFloat {
        if rhs.mant == 0.0 {
            return self;
        }
        if self.mant == 0.0 {
            return rhs;
        }
        if !self.mant.is_finite() || !rhs.mant.is_finite() {
            return ExtFloat::normalize(self.mant + rhs.mant, 0);
        }
        let d = self.exp - rhs.exp;
        if d > 60 {
            self
        } else if d < -60 {
            rhs
        } else if d >= 0 {
            ExtFloat::normalize(self.mant + rhs.mant * pow2(-d), self.exp)
        } else {
            ExtFloat::normalize(self.mant * pow2(d) + rhs.mant, rhs.exp)
        }
    }
}

impl Sub for ExtFloat {
    type Output = ExtFloat;
    fn sub(self, rhs: ExtFloat) -> ExtFloat {
        self + (-rhs)
    }
}

impl Mul for ExtFloat {
    type Output = ExtFloat;
    fn mul(self, rhs: ExtFloat) -> ExtFloat {
        ExtFloat::normalize(self.mant * rhs.mant, self.exp.saturating_add(rhs.exp))
    }
}

impl Div for ExtFloat {
    type Output = ExtFloat;
    fn div(self, rhs: ExtFloat) -> ExtFloat {
        ExtFloat::normalize(self.mant / rhs.mant, self.exp.saturating_sub(rhs.exp))
    }
}

impl Rem for ExtFloat {
    type Output = ExtFloat;
    fn rem(self, rhs: ExtFloat) -> ExtFloat {
        self - rhs * (self / rhs).trunc()
    }
}

impl Neg for ExtFloat {
    type Output = ExtFloat;
    fn neg(self) -> ExtFloat {
        ExtFloat { mant: -self.mant, exp: self.exp }
    }
}

macro_rules! assign_op {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr for ExtFloat {
            fn $f(&mut self, rhs: ExtFloat) {
                *self = *self $op rhs;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl PartialOrd for ExtFloat {
    fn partial_cmp(&self, other: &ExtFloat) -> Option<Ordering> {
        if !self.mant.is_finite() || !other.mant.is_finite() {
            return self.to_f64_inner().partial_cmp(&other.to_f64_inner());
        }
        (*self - *other).mant.partial_cmp(&0.0)
    }
}

impl Zero for ExtFloat {
    fn zero() -> Self {
        ExtFloat::ZERO
    }
    fn is_zero(&self) -> bool {
        self.mant == 0.0
    }
}

impl One for ExtFloat {
    fn one() -> Self {
        ExtFloat::ONE
    }
}

impl Num for ExtFloat {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        <f64 as Num>::from_str_radix(s, radix).map(ExtFloat::from)
    }
}

impl Scalar for ExtFloat {
    const NAME: &'static str = "ext64";

    fn from_f64(x: f64) -> Self {
        ExtFloat::from(x)
    }

    fn to_f64(self) -> f64 {
        self.to_f64_inner()
    }

    fn exp(self) -> Self {
        if !self.mant.is_finite() {
            return ExtFloat::from(self.mant.exp());
        }
        if self.exp > 62 {
            return if self.mant > 0.0 { ExtFloat::from(f64::INFINITY) } else { ExtFloat::ZERO };
        }
        let x = self.to_f64_inner();
        let k = (x / std::f64::consts::LN_2).round();
        let r = (-k).mul_add(LN2_HI, x);
        let r = (-k).mul_add(LN2_LO, r);
        ExtFloat::normalize(r.exp(), k as i64)
    }

    fn ln(self) -> Self {
        if self.mant <= 0.0 || !self.mant.is_finite() {
            return ExtFloat::from(self.mant.ln());
        }
        ExtFloat::from(self.mant.ln() + self.exp as f64 * std::f64::consts::LN_2)
    }

    fn abs(self) -> Self {
        ExtFloat { mant: self.mant.abs(), exp: self.exp }
    }

    fn is_finite(self) -> bool {
        self.mant.is_finite()
    }

    fn is_nan(self) -> bool {
        self.mant.is_nan()
    }

    fn epsilon() -> Self {
        ExtFloat::from(f64::EPSILON)
    }

    fn kernel_floor() -> Self {
        ExtFloat { mant: 0.5, exp: -(1 << 40) }
    }
}

impl fmt::Display for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x = self.to_f64_inner();
        if x == 0.0 && self.mant != 0.0 || x.is_infinite() && self.mant.is_finite() {
            let lg = self.log10_abs();
            let e10 = lg.floor();
            let m10 = 10f64.powf(lg - e10).copysign(self.mant);
            let prec = f.precision().unwrap_or(6);
            write!(f, "{:.*}e{}", prec, m10, e10 as i64)
        } else {
            fmt::Display::fmt(&x, f)
        }
    }
}

impl fmt::Debug for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExtFloat({self:e})")
    }
}

impl fmt::LowerExp for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x = self.to_f64_inner();
        if (x == 0.0 && self.mant != 0.0) || (x.is_infinite() && self.mant.is_finite()) {
            fmt::Display::fmt(self, f)
        } else {
            fmt::LowerExp::fmt(&x, f)
        }
    }
}
