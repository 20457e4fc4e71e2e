//! Distances of the closure engine: exact elements `a + b*sqrt(d)` of a real
//! quadratic field, or certified intervals with outward rounding.
//!
//! Exact signs and floors never go through floating point. For
//! `x = (A + B*sqrt(d)) / D` with integers `A, B, D`, the integer square root
//! `s = isqrt(B^2 d)` pins `B*sqrt(d)` to an open unit interval (it is
//! irrational when `B != 0`), which already determines `floor(x)`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

/// Largest precision (in bits) used when separating values of different
/// quadratic fields by refinement.
const MAX_REFINE_BITS: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScalarError {
    #[error("cannot parse scalar {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("cannot decide {left} vs {right} at the available precision; refine the inputs")]
    Undecided { left: String, right: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid scalar: {0}")]
    Invalid(String),
}

pub type ScalarResult<T> = std::result::Result<T, ScalarError>;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Splits `k` into `s^2 * f` with `f` square-free.
fn square_free(k: u64) -> (u64, u64) {
    let (mut s, mut f, mut p) = (1u64, k, 2u64);
    while p.saturating_mul(p) <= f {
        while f % (p * p) == 0 {
            f /= p * p;
            s *= p;
        }
        p += 1;
    }
    (s, f)
}

/// `a + b*sqrt(d)` with `d` square-free. Rationals carry `b = 0, d = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Quadratic {
    a: BigRational,
    b: BigRational,
    d: u64,
}

impl Quadratic {
    pub fn new(a: BigRational, b: BigRational, d: u64) -> Self {
        if d == 0 || b.is_zero() {
            return Self::rational(a);
        }
        let (s, f) = square_free(d);
        let b = b * BigInt::from(s);
        if f == 1 {
            Self::rational(a + b)
        } else {
            Quadratic { a, b, d: f }
        }
    }

    pub fn rational(a: BigRational) -> Self {
        Quadratic {
            a,
            b: BigRational::zero(),
            d: 1,
        }
    }

    pub fn integer(n: i64) -> Self {
        Self::rational(rat(n, 1))
    }

    pub fn sqrt(k: u64) -> Self {
        Self::new(BigRational::zero(), BigRational::one(), k)
    }

    pub fn a(&self) -> &BigRational {
        &self.a
    }

    pub fn b(&self) -> &BigRational {
        &self.b
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    /// Common field of two elements, if any.
    fn field_with(&self, other: &Quadratic) -> Option<u64> {
        if self.is_rational() {
            Some(other.d)
        } else if other.is_rational() || self.d == other.d {
            Some(self.d)
        } else {
            None
        }
    }

    pub fn checked_add(&self, o: &Quadratic) -> Option<Quadratic> {
        let d = self.field_with(o)?;
        Some(Quadratic::new(&self.a + &o.a, &self.b + &o.b, d))
    }

    pub fn checked_sub(&self, o: &Quadratic) -> Option<Quadratic> {
        self.checked_add(&o.neg())
    }

    pub fn checked_mul(&self, o: &Quadratic) -> Option<Quadratic> {
        let d = self.field_with(o)?;
        let dd = BigRational::from_integer(BigInt::from(d));
        let a = &self.a * &o.a + &self.b * &o.b * dd;
        let b = &self.a * &o.b + &o.a * &self.b;
        Some(Quadratic::new(a, b, d))
    }

    pub fn checked_div(&self, o: &Quadratic) -> Option<ScalarResult<Quadratic>> {
        self.field_with(o)?;
        if o.is_zero() {
            return Some(Err(ScalarError::DivisionByZero));
        }
        let norm = &o.a * &o.a - &o.b * &o.b * BigRational::from_integer(BigInt::from(o.d));
        let conj = Quadratic {
            a: o.a.clone(),
            b: -o.b.clone(),
            d: o.d,
        };
        let num = self.checked_mul(&conj)?;
        Some(Ok(Quadratic::new(num.a / &norm, num.b / &norm, num.d)))
    }

    pub fn neg(&self) -> Quadratic {
        Quadratic {
            a: -self.a.clone(),
            b: -self.b.clone(),
            d: self.d,
        }
    }

    pub fn scale(&self, k: &BigRational) -> Quadratic {
        Quadratic::new(&self.a * k, &self.b * k, self.d)
    }

    pub fn sign(&self) -> Ordering {
        let sa = self.a.cmp(&BigRational::zero());
        let sb = self.b.cmp(&BigRational::zero());
        if sb == Ordering::Equal || sa == sb {
            return if sa == Ordering::Equal { sb } else { sa };
        }
        if sa == Ordering::Equal {
            return sb;
        }
        // Opposite signs: compare a^2 with b^2 d.
        let a2 = &self.a * &self.a;
        let b2d = &self.b * &self.b * BigRational::from_integer(BigInt::from(self.d));
        match a2.cmp(&b2d) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => Ordering::Equal,
        }
    }

    /// Writes `self = (A + B sqrt(d)) / D` with `D > 0`.
    fn integral_form(&self) -> (BigInt, BigInt, BigInt) {
        let den = self.a.denom().lcm(self.b.denom());
        let a = self.a.numer() * (&den / self.a.denom());
        let b = self.b.numer() * (&den / self.b.denom());
        (a, b, den)
    }

    pub fn floor(&self) -> BigInt {
        let (a, b, den) = self.integral_form();
        if b.is_zero() {
            return a.div_floor(&den);
        }
        let s = (&b * &b * BigInt::from(self.d)).sqrt();
        // b sqrt(d) lies strictly between consecutive integers, so the
        // numerator lies in (low, low + 1) and no multiple of den is crossed.
        let low = if b.is_positive() { a + s } else { a - s - 1 };
        low.div_floor(&den)
    }

    /// `floor(self * 2^bits)`.
    fn floor_scaled(&self, bits: u64) -> BigInt {
        let k = BigRational::from_integer(BigInt::one() << bits);
        self.scale(&k).floor()
    }

    /// Rational bounds `lo <= self <= hi` with `hi - lo = 2^-bits`.
    pub fn enclosure(&self, bits: u64) -> (BigRational, BigRational) {
        let m = self.floor_scaled(bits);
        let den = BigInt::one() << bits;
        (
            BigRational::new(m.clone(), den.clone()),
            BigRational::new(m + 1, den),
        )
    }

    /// Nearest-ish double, accurate to a few ulps even under cancellation.
    pub fn approx(&self) -> f64 {
        if self.is_rational() {
            return ratio_to_f64(&self.a);
        }
        let mut bits = 0u64;
        loop {
            let m = self.floor_scaled(bits);
            if m.bits() >= 60 || bits >= MAX_REFINE_BITS {
                let v = m.to_f64().unwrap_or(f64::NAN);
                return v * 2f64.powi(-(bits.min(2000) as i32));
            }
            bits += 64;
        }
    }

    fn cmp_f64(&self, v: f64) -> Ordering {
        let q = BigRational::from_float(v).expect("finite bound");
        self.checked_sub(&Quadratic::rational(q))
            .expect("rationals join every field")
            .sign()
    }

    /// Certified enclosing interval with double endpoints.
    pub fn to_interval(&self) -> Interval {
        let v = self.approx();
        let (mut lo, mut hi) = (v, v);
        let mut step = 0;
        while self.cmp_f64(lo) == Ordering::Less {
            lo = if step < 64 { lo.next_down() } else { lo - (v.abs() + 1.0) * f64::EPSILON * step as f64 };
            step += 1;
        }
        step = 0;
        while self.cmp_f64(hi) == Ordering::Greater {
            hi = if step < 64 { hi.next_up() } else { hi + (v.abs() + 1.0) * f64::EPSILON * step as f64 };
            step += 1;
        }
        Interval { lo, hi }
    }
}

fn ratio_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 && n.abs() < 9.0e15 && d < 9.0e15 {
            return n / d;
        }
    }
    // Large parts: shift to keep 64 significant bits.
    let shift = q.numer().bits() as i64 - q.denom().bits() as i64 - 64;
    let scaled = if shift > 0 {
        q / BigRational::from_integer(BigInt::one() << shift as u64)
    } else {
        q * BigRational::from_integer(BigInt::one() << (-shift) as u64)
    };
    scaled.to_integer().to_f64().unwrap_or(f64::NAN) * 2f64.powi(shift.clamp(-2000, 2000) as i32)
}

impl fmt::Display for Quadratic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            return write!(f, "{}", self.a);
        }
        let root = format!("sqrt{}", self.d);
        let b_term = if self.b.is_one() {
            root
        } else if (-self.b.clone()).is_one() {
            format!("-{root}")
        } else {
            format!("{}*{root}", self.b)
        };
        if self.a.is_zero() {
            write!(f, "{b_term}")
        } else if self.b.is_positive() {
            write!(f, "{}+{b_term}", self.a)
        } else {
            write!(f, "{}{b_term}", self.a)
        }
    }
}

/// Closed interval of reals with double endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> ScalarResult<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(ScalarError::Invalid(format!("interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(v: f64) -> ScalarResult<Self> {
        Self::new(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval {
            lo: (self.lo + o.lo).next_down(),
            hi: (self.hi + o.hi).next_up(),
        }
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval {
            lo: (self.lo - o.hi).next_down(),
            hi: (self.hi - o.lo).next_up(),
        }
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval {
            lo: lo.next_down(),
            hi: hi.next_up(),
        }
    }

    pub fn div(&self, o: &Interval) -> ScalarResult<Interval> {
        if o.lo <= 0.0 && o.hi >= 0.0 {
            return Err(ScalarError::DivisionByZero);
        }
        let p = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Interval {
            lo: lo.next_down(),
            hi: hi.next_up(),
        })
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

/// A distance: exact quadratic irrational or certified interval.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Exact(Quadratic),
    Interval(Interval),
}

impl Scalar {
    pub fn integer(n: i64) -> Self {
        Scalar::Exact(Quadratic::integer(n))
    }

    pub fn ratio(p: i64, q: i64) -> Self {
        Scalar::Exact(Quadratic::rational(rat(p, q)))
    }

    pub fn sqrt(k: u64) -> Self {
        Scalar::Exact(Quadratic::sqrt(k))
    }

    /// `a + b sqrt(d)` with rational `a, b`.
    pub fn quadratic(a: (i64, i64), b: (i64, i64), d: u64) -> Self {
        Scalar::Exact(Quadratic::new(rat(a.0, a.1), rat(b.0, b.1), d))
    }

    pub fn interval(lo: f64, hi: f64) -> ScalarResult<Self> {
        Interval::new(lo, hi).map(Scalar::Interval)
    }

    /// Interval around the double `pi`, which is below the real constant.
    pub fn pi() -> Self {
        let p = std::f64::consts::PI;
        Scalar::Interval(Interval {
            lo: p,
            hi: p.next_up(),
        })
    }

    pub fn as_exact(&self) -> Option<&Quadratic> {
        match self {
            Scalar::Exact(q) => Some(q),
            Scalar::Interval(_) => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    /// `Some(true)` for exact rationals, `Some(false)` for exact irrationals,
    /// `None` when an interval leaves it open.
    pub fn is_rational(&self) -> Option<bool> {
        self.as_exact().map(Quadratic::is_rational)
    }

    pub fn to_interval(&self) -> Interval {
        match self {
            Scalar::Exact(q) => q.to_interval(),
            Scalar::Interval(i) => *i,
        }
    }

    pub fn approx(&self) -> f64 {
        match self {
            Scalar::Exact(q) => q.approx(),
            Scalar::Interval(i) => i.mid(),
        }
    }

    fn binary(
        &self,
        o: &Scalar,
        exact: impl Fn(&Quadratic, &Quadratic) -> Option<ScalarResult<Quadratic>>,
        inexact: impl Fn(&Interval, &Interval) -> ScalarResult<Interval>,
    ) -> ScalarResult<Scalar> {
        if let (Scalar::Exact(x), Scalar::Exact(y)) = (self, o) {
            if let Some(r) = exact(x, y) {
                return r.map(Scalar::Exact);
            }
        }
        inexact(&self.to_interval(), &o.to_interval()).map(Scalar::Interval)
    }

    pub fn add(&self, o: &Scalar) -> ScalarResult<Scalar> {
        self.binary(o, |x, y| x.checked_add(y).map(Ok), |x, y| Ok(x.add(y)))
    }

    pub fn sub(&self, o: &Scalar) -> ScalarResult<Scalar> {
        self.binary(o, |x, y| x.checked_sub(y).map(Ok), |x, y| Ok(x.sub(y)))
    }

    pub fn mul(&self, o: &Scalar) -> ScalarResult<Scalar> {
        self.binary(o, |x, y| x.checked_mul(y).map(Ok), |x, y| Ok(x.mul(y)))
    }

    pub fn div(&self, o: &Scalar) -> ScalarResult<Scalar> {
        self.binary(o, |x, y| x.checked_div(y), |x, y| x.div(y))
    }

    pub fn neg(&self) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(q.neg()),
            Scalar::Interval(i) => Scalar::Interval(i.neg()),
        }
    }

    pub fn mul_int(&self, k: &BigInt) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(q.scale(&BigRational::from_integer(k.clone()))),
            Scalar::Interval(i) => {
                let kf = k.to_f64().unwrap_or(f64::INFINITY);
                let ki = Interval {
                    lo: kf,
                    hi: kf,
                };
                // Integers beyond 2^53 are not exact doubles.
                let ki = if kf.abs() < 9.0e15 {
                    ki
                } else {
                    Interval {
                        lo: kf.next_down(),
                        hi: kf.next_up(),
                    }
                };
                Scalar::Interval(i.mul(&ki))
            }
        }
    }

    fn undecided(&self, o: &Scalar) -> ScalarError {
        ScalarError::Undecided {
            left: self.to_string(),
            right: o.to_string(),
        }
    }

    /// Certain comparison; `Undecided` when intervals overlap.
    pub fn compare(&self, o: &Scalar) -> ScalarResult<Ordering> {
        if let (Scalar::Exact(x), Scalar::Exact(y)) = (self, o) {
            if let Some(diff) = x.checked_sub(y) {
                return Ok(diff.sign());
            }
            // Elements of different quadratic fields are never equal.
            let mut bits = 64;
            while bits <= MAX_REFINE_BITS {
                let (xl, xh) = x.enclosure(bits);
                let (yl, yh) = y.enclosure(bits);
                if xh < yl {
                    return Ok(Ordering::Less);
                }
                if yh < xl {
                    return Ok(Ordering::Greater);
                }
                bits *= 2;
            }
            return Err(self.undecided(o));
        }
        let (x, y) = (self.to_interval(), o.to_interval());
        if x.hi < y.lo {
            Ok(Ordering::Less)
        } else if x.lo > y.hi {
            Ok(Ordering::Greater)
        } else if x.lo == x.hi && y.lo == y.hi && !(self.is_exact() ^ o.is_exact()) {
            Ok(Ordering::Equal)
        } else {
            Err(self.undecided(o))
        }
    }

    pub fn lt(&self, o: &Scalar) -> ScalarResult<bool> {
        Ok(self.compare(o)? == Ordering::Less)
    }

    pub fn le(&self, o: &Scalar) -> ScalarResult<bool> {
        Ok(self.compare(o)? != Ordering::Greater)
    }

    pub fn sign(&self) -> ScalarResult<Ordering> {
        self.compare(&Scalar::integer(0))
    }

    pub fn floor(&self) -> ScalarResult<BigInt> {
        match self {
            Scalar::Exact(q) => Ok(q.floor()),
            Scalar::Interval(i) => {
                let (lo, hi) = (i.lo.floor(), i.hi.floor());
                if lo != hi {
                    return Err(ScalarError::Undecided {
                        left: format!("floor of {i}"),
                        right: "an integer".into(),
                    });
                }
                BigInt::from_f64_exact(lo)
            }
        }
    }

    /// `floor(self / o)` for positive `o`.
    pub fn floor_div(&self, o: &Scalar) -> ScalarResult<BigInt> {
        if let (Scalar::Exact(x), Scalar::Exact(y)) = (self, o) {
            if y.is_zero() {
                return Err(ScalarError::DivisionByZero);
            }
            if let Some(q) = x.checked_div(y) {
                return Ok(q?.floor());
            }
            // Different fields: the quotient is irrational, refine until
            // both ends of its enclosure share a floor.
            let mut bits = 64;
            while bits <= MAX_REFINE_BITS {
                let (xl, xh) = x.enclosure(bits);
                let (yl, yh) = y.enclosure(bits);
                if yl.is_positive() && xl.is_positive() {
                    let lo = (&xl / &yh).floor().to_integer();
                    let hi = (&xh / &yl).floor().to_integer();
                    if lo == hi {
                        return Ok(lo);
                    }
                }
                bits *= 2;
            }
            return Err(self.undecided(o));
        }
        self.div(o)?.floor()
    }

    /// `n * self - floor(n * self)`.
    pub fn frac_multiple(&self, n: u64) -> ScalarResult<Scalar> {
        let nr = self.mul_int(&BigInt::from(n));
        let k = nr.floor()?;
        nr.sub(&Scalar::Exact(Quadratic::rational(BigRational::from_integer(k))))
    }

    fn to_json(&self) -> Value {
        fn int(v: &BigInt) -> Value {
            match v.to_i64() {
                Some(i) => json!(i),
                None => json!(v.to_string()),
            }
        }
        match self {
            Scalar::Exact(q) => json!({
                "exact": [int(q.a.numer()), int(q.a.denom()), int(q.b.numer()), int(q.b.denom()), q.d]
            }),
            Scalar::Interval(i) => json!({ "interval": [i.lo, i.hi] }),
        }
    }

    fn from_json(v: &Value) -> ScalarResult<Scalar> {
        let bad = |why: &str| ScalarError::Invalid(format!("{why}: {v}"));
        fn int(v: &Value) -> Option<BigInt> {
            match v {
                Value::Number(n) => n.as_i64().map(BigInt::from),
                Value::String(s) => s.parse().ok(),
                _ => None,
            }
        }
        let obj = v.as_object().ok_or_else(|| bad("expected an object"))?;
        if let Some(parts) = obj.get("exact").and_then(Value::as_array) {
            if parts.len() != 5 {
                return Err(bad("exact scalar needs five entries"));
            }
            let n: Vec<BigInt> = parts[..4]
                .iter()
                .map(int)
                .collect::<Option<_>>()
                .ok_or_else(|| bad("non-integer entry"))?;
            if n[1].is_zero() || n[3].is_zero() {
                return Err(bad("zero denominator"));
            }
            let d = parts[4].as_u64().ok_or_else(|| bad("field index must be a natural number"))?;
            let a = BigRational::new(n[0].clone(), n[1].clone());
            let b = BigRational::new(n[2].clone(), n[3].clone());
            return Ok(Scalar::Exact(Quadratic::new(a, b, d)));
        }
        if let Some(parts) = obj.get("interval").and_then(Value::as_array) {
            let ends: Vec<f64> = parts.iter().filter_map(Value::as_f64).collect();
            if ends.len() != 2 || parts.len() != 2 {
                return Err(bad("interval needs two numbers"));
            }
            return Scalar::interval(ends[0], ends[1]);
        }
        Err(bad("expected \"exact\" or \"interval\""))
    }
}

trait FromF64Exact: Sized {
    fn from_f64_exact(v: f64) -> ScalarResult<Self>;
}

impl FromF64Exact for BigInt {
    fn from_f64_exact(v: f64) -> ScalarResult<BigInt> {
        BigRational::from_float(v)
            .map(|q| q.to_integer())
            .ok_or_else(|| ScalarError::Invalid(format!("non-finite value {v}")))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(q) => q.fmt(f),
            Scalar::Interval(i) => i.fmt(f),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.to_json();
        let obj = v.as_object().expect("scalar json is an object");
        let mut map = s.serialize_map(Some(obj.len()))?;
        for (k, val) in obj {
            map.serialize_entry(k, val)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Scalar::from_json(&v).map_err(D::Error::custom)
    }
}

/// A radius bound that may be infinite (convexity or injectivity radius).
#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    Finite(Scalar),
    Infinite,
}

impl Bound {
    pub fn finite(&self) -> Option<&Scalar> {
        match self {
            Bound::Finite(s) => Some(s),
            Bound::Infinite => None,
        }
    }

    /// Certain `x < self`.
    pub fn exceeds(&self, x: &Scalar) -> ScalarResult<bool> {
        match self {
            Bound::Finite(b) => x.lt(b),
            Bound::Infinite => Ok(true),
        }
    }

    /// `self * k` for an exact rational `k > 0`.
    pub fn scale(&self, k: &Scalar) -> ScalarResult<Bound> {
        match self {
            Bound::Finite(b) => b.mul(k).map(Bound::Finite),
            Bound::Infinite => Ok(Bound::Infinite),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(s) => s.fmt(f),
            Bound::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Bound {
    type Err = ScalarError;

    fn from_str(s: &str) -> ScalarResult<Bound> {
        match s.trim() {
            "inf" | "+inf" | "infinity" => Ok(Bound::Infinite),
            other => other.parse().map(Bound::Finite),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bound::Finite(v) => v.serialize(s),
            Bound::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        match &v {
            Value::String(s) if s == "inf" => Ok(Bound::Infinite),
            _ => Scalar::from_json(&v).map(Bound::Finite).map_err(D::Error::custom),
        }
    }
}

// Grammar: expr := term (('+'|'-') term)*, term := unary (('*'|'/') unary)*,
// unary := '-' unary | atom, atom := number | 'sqrt' digits | 'pi' | '(' expr ')'.
struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn fail<T>(&self, reason: impl Into<String>) -> ScalarResult<T> {
        Err(ScalarError::Parse {
            input: self.src.to_string(),
            reason: format!("{} at offset {}", reason.into(), self.pos),
        })
    }

    fn peek(&mut self) -> Option<char> {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        trimmed.chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> ScalarResult<Scalar> {
        let mut v = self.term()?;
        loop {
            if self.eat('+') {
                v = v.add(&self.term()?)?;
            } else if self.eat('-') {
                v = v.sub(&self.term()?)?;
            } else {
                return Ok(v);
            }
        }
    }

    fn term(&mut self) -> ScalarResult<Scalar> {
        let mut v = self.unary()?;
        loop {
            if self.eat('*') {
                v = v.mul(&self.unary()?)?;
            } else if self.eat('/') {
                v = v.div(&self.unary()?)?;
            } else {
                return Ok(v);
            }
        }
    }

    fn unary(&mut self) -> ScalarResult<Scalar> {
        if self.eat('-') {
            return Ok(self.unary()?.neg());
        }
        if self.eat('+') {
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> ScalarResult<Scalar> {
        if self.eat('(') {
            let v = self.expr()?;
            if !self.eat(')') {
                return self.fail("expected ')'");
            }
            return Ok(v);
        }
        let rest = &self.src[self.pos..];
        if let Some(after) = rest.strip_prefix("sqrt") {
            let digits: String = after.chars().take_while(char::is_ascii_digit).collect();
            let k: u64 = match digits.parse() {
                Ok(k) => k,
                Err(_) => return self.fail("expected digits after 'sqrt'"),
            };
            self.pos += 4 + digits.len();
            return Ok(Scalar::sqrt(k));
        }
        if rest.starts_with("pi") {
            self.pos += 2;
            return Ok(Scalar::pi());
        }
        self.number()
    }

    fn number(&mut self) -> ScalarResult<Scalar> {
        let rest = &self.src[self.pos..];
        let bytes = rest.as_bytes();
        let mut i = 0;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        let mantissa = &rest[..i];
        if mantissa.is_empty() || mantissa == "." {
            return self.fail("expected a number");
        }
        let mut exponent: i64 = 0;
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'-' || bytes[j] == b'+') {
                j += 1;
            }
            let start = j;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j == start {
                return self.fail("expected exponent digits");
            }
            exponent = match rest[i + 1..j].parse() {
                Ok(e) => e,
                Err(_) => return self.fail("exponent out of range"),
            };
            i = j;
        }
        let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if frac_part.contains('.') {
            return self.fail("malformed decimal");
        }
        let digits: BigInt = match format!("{int_part}{frac_part}").parse() {
            Ok(d) => d,
            Err(_) => return self.fail("malformed decimal"),
        };
        let e = exponent - frac_part.len() as i64;
        if e.abs() > 4000 {
            return self.fail("exponent out of range");
        }
        let ten = BigInt::from(10).pow(e.unsigned_abs() as u32);
        let q = if e >= 0 {
            BigRational::from_integer(digits * ten)
        } else {
            BigRational::new(digits, ten)
        };
        self.pos += i;
        Ok(Scalar::Exact(Quadratic::rational(q)))
    }
}

impl std::str::FromStr for Scalar {
    type Err = ScalarError;

    /// Accepts `p/q`, decimals (`0.5`, `1e-6`), `sqrtK`, `pi` and sums and
    /// products of these, e.g. `a+b*sqrtK` or `sqrt2/8`.
    fn from_str(s: &str) -> ScalarResult<Scalar> {
        let mut p = Parser { src: s, pos: 0 };
        let v = p.expr()?;
        if p.peek().is_some() {
            return p.fail("unexpected trailing input");
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(s: &str) -> Scalar {
        s.parse().unwrap()
    }

    #[test]
    fn parses_grammar() {
        assert_eq!(q("3/4"), Scalar::ratio(3, 4));
        assert_eq!(q("sqrt8"), Scalar::quadratic((0, 1), (2, 1), 2));
        assert_eq!(q("-7+5*sqrt2"), Scalar::quadratic((-7, 1), (5, 1), 2));
        assert_eq!(q("sqrt2/8"), Scalar::quadratic((0, 1), (1, 8), 2));
        assert_eq!(q("1e-6"), Scalar::ratio(1, 1_000_000));
        assert_eq!(q("0.25"), Scalar::ratio(1, 4));
        assert_eq!(q("sqrt4"), Scalar::integer(2));
        assert!(matches!(q("pi/2"), Scalar::Interval(_)));
        assert!("sqrtx".parse::<Scalar>().is_err());
        assert!("1+".parse::<Scalar>().is_err());
        assert!("1 2".parse::<Scalar>().is_err());
        assert_eq!("inf".parse::<Bound>().unwrap(), Bound::Infinite);
    }

    #[test]
    fn display_round_trips() {
        for s in ["-7+5*sqrt2", "3-2*sqrt2", "sqrt3", "-sqrt5", "1/8*sqrt2", "5/3", "1/2+3/7*sqrt11"] {
            assert_eq!(q(&q(s).to_string()), q(s), "{s}");
        }
    }

    #[test]
    fn exact_sign_and_floor() {
        assert_eq!(q("5*sqrt2-7").sign().unwrap(), Ordering::Greater);
        assert_eq!(q("7-5*sqrt2").sign().unwrap(), Ordering::Less);
        assert_eq!(q("1+sqrt2").floor().unwrap(), BigInt::from(2));
        assert_eq!(q("-1-sqrt2").floor().unwrap(), BigInt::from(-3));
        assert_eq!(q("1/(sqrt2-1)").floor().unwrap(), BigInt::from(2));
        assert_eq!(q("(sqrt2-1)/(3-2*sqrt2)"), q("1+sqrt2"));
        // 99/70 is a convergent of sqrt2 from above.
        assert_eq!(q("sqrt2").compare(&q("99/70")).unwrap(), Ordering::Less);
    }

    #[test]
    fn cross_field_comparison_by_refinement() {
        assert_eq!(q("sqrt2").compare(&q("sqrt3")).unwrap(), Ordering::Less);
        assert_eq!(q("sqrt3").floor_div(&q("sqrt2")).unwrap(), BigInt::from(1));
        assert_eq!(q("10*sqrt3").floor_div(&q("sqrt2")).unwrap(), BigInt::from(12));
        assert!(matches!(q("sqrt2").add(&q("sqrt3")).unwrap(), Scalar::Interval(_)));
    }

    #[test]
    fn interval_comparisons() {
        let a = Scalar::interval(1.0, 2.0).unwrap();
        assert!(a.lt(&Scalar::integer(3)).unwrap());
        assert!(a.compare(&q("3/2")).is_err());
        assert!(Scalar::pi().to_interval().contains(std::f64::consts::PI));
        assert!(q("pi").compare(&q("355/113")).is_err() || q("pi").lt(&q("355/113")).unwrap());
    }

    #[test]
    fn json_shapes() {
        let v = serde_json::to_value(q("5*sqrt2-7")).unwrap();
        assert_eq!(v, json!({"exact": [-7, 1, 5, 1, 2]}));
        let big = q("123456789012345678901234567890");
        let v = serde_json::to_value(&big).unwrap();
        assert_eq!(v["exact"][0], json!("123456789012345678901234567890"));
        assert_eq!(serde_json::from_value::<Scalar>(v).unwrap(), big);
        let i = Scalar::interval(0.5, 0.75).unwrap();
        let v = serde_json::to_value(&i).unwrap();
        assert_eq!(v, json!({"interval": [0.5, 0.75]}));
        assert_eq!(serde_json::from_value::<Scalar>(v).unwrap(), i);
        assert_eq!(serde_json::to_value(Bound::Infinite).unwrap(), json!("inf"));
    }

    proptest! {
        #[test]
        fn to_interval_encloses(a in -1000i64..1000, b in -1000i64..1000, den in 1i64..500, d in 2u64..50) {
            let x = Scalar::quadratic((a, den), (b, den), d);
            let i = x.to_interval();
            let xq = x.as_exact().unwrap();
            prop_assert!(xq.cmp_f64(i.lo()) != Ordering::Less);
            prop_assert!(xq.cmp_f64(i.hi()) != Ordering::Greater);
            prop_assert!(i.width() <= 4.0 * f64::EPSILON * (1.0 + i.lo().abs()));
        }

        #[test]
        fn floor_agrees_with_enclosure(a in -10_000i64..10_000, b in -100i64..100, den in 1i64..97, d in 2u64..30) {
            let x = Scalar::quadratic((a, den), (b, 1), d);
            let f = x.floor().unwrap();
            let fq = Scalar::Exact(Quadratic::rational(BigRational::from_integer(f.clone())));
            prop_assert!(fq.le(&x).unwrap());
            prop_assert!(x.lt(&fq.add(&Scalar::integer(1)).unwrap()).unwrap());
        }

        #[test]
        fn interval_arithmetic_is_outward(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let (x, y) = (Interval::point(a).unwrap(), Interval::point(b).unwrap());
            prop_assert!(x.add(&y).lo() <= a + b && a + b <= x.add(&y).hi());
            prop_assert!(x.mul(&y).lo() <= a * b && a * b <= x.mul(&y).hi());
        }
    }
}
