//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the Taylor coefficients of a smooth function around a
//! base point, `f(p + h) = sum_a c_a h^a`, truncated at some total degree.
//! Arithmetic and the elementary functions propagate the coefficients exactly
//! (up to rounding), so derivatives obtained from a jet carry no truncation
//! error.
//!
//! Jets of different orders can be mixed; the result of any binary operation
//! is valid to the smaller of the two orders. Taking a partial derivative
//! lowers the order by one, which is how chains such as "bracket of a field
//! built from a linear solve over first derivatives" are kept consistent.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

/// Largest total degree a jet can carry.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("{0}")]
    Domain(&'static str),
    #[error("order {requested} exceeds the supported maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },
}

/// Monomial bookkeeping shared by every jet in a given number of variables.
#[derive(Debug)]
struct Layout {
    nvars: usize,
    exps: Vec<Vec<u8>>,
    /// `count[k]` is the number of monomials of degree <= k.
    count: Vec<usize>,
    /// Product table `(i, j, k)` meaning `h^i * h^j = h^k`, sorted by deg(k).
    mul: Vec<(u32, u32, u32)>,
    /// `mul_end[k]` is the number of product entries whose degree is <= k.
    mul_end: Vec<usize>,
    /// `raise[v][i]` is the index of monomial `i + e_v`, if within MAX_ORDER.
    raise: Vec<Vec<Option<u32>>>,
    /// For each monomial of degree >= 1: (index of monomial - e_v, v) for the
    /// first variable v it contains.
    lower_first: Vec<Option<(u32, u32)>>,
}

impl Layout {
    fn build(nvars: usize) -> Layout {
        let mut exps: Vec<Vec<u8>> = vec![vec![0; nvars]];
        let mut count = vec![1usize];
        for deg in 1..=MAX_ORDER {
            let start = if deg == 1 { 0 } else { count[deg - 2] };
            let prev: Vec<Vec<u8>> = exps[start..count[deg - 1]].to_vec();
            let mut level: Vec<Vec<u8>> = Vec::new();
            for e in &prev {
                // extend only at or after the last nonzero var to avoid duplicates
                let last = e.iter().rposition(|&x| x > 0).unwrap_or(0);
                for v in last..nvars {
                    let mut n = e.clone();
                    n[v] += 1;
                    level.push(n);
                }
            }
            exps.extend(level);
            count.push(exps.len());
        }
        let index: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let deg = |e: &Vec<u8>| e.iter().map(|&x| x as usize).sum::<usize>();

        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if deg(a) + deg(b) > MAX_ORDER {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u32, j as u32, index[&s] as u32));
            }
        }
        mul.sort_by_key(|&(_, _, k)| (deg(&exps[k as usize]), k));
        let mut mul_end = vec![0; MAX_ORDER + 1];
        for (k, end) in mul_end.iter_mut().enumerate() {
            *end = mul.iter().filter(|&&(_, _, r)| deg(&exps[r as usize]) <= k).count();
        }

        let raise = (0..nvars)
            .map(|v| {
                exps.iter()
                    .map(|e| {
                        let mut n = e.clone();
                        n[v] += 1;
                        index.get(&n).map(|&i| i as u32)
                    })
                    .collect()
            })
            .collect();
        let lower_first = exps
            .iter()
            .map(|e| {
                e.iter().position(|&x| x > 0).map(|v| {
                    let mut n = e.clone();
                    n[v] -= 1;
                    (index[&n] as u32, v as u32)
                })
            })
            .collect();
        Layout { nvars, exps, count, mul, mul_end, raise, lower_first }
    }

    fn get(nvars: usize) -> Arc<Layout> {
        static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Layout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(l) = cache.read().expect("layout cache poisoned").get(&nvars) {
            return l.clone();
        }
        let mut w = cache.write().expect("layout cache poisoned");
        w.entry(nvars).or_insert_with(|| Arc::new(Layout::build(nvars))).clone()
    }
}

/// Truncated Taylor expansion of a scalar function in `nvars` variables.
#[derive(Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    order: usize,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.layout.nvars)
            .field("order", &self.order)
            .field("coeffs", &self.c)
            .finish()
    }
}

impl Jet {
    fn check_order(order: usize) -> usize {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds MAX_ORDER {MAX_ORDER}");
        order
    }

    pub fn constant(nvars: usize, order: usize, value: f64) -> Jet {
        let layout = Layout::get(nvars);
        let order = Self::check_order(order);
        let mut c = vec![0.0; layout.count[order]];
        c[0] = value;
        Jet { layout, order, c }
    }

    /// The coordinate function `x_var` expanded around `value`.
    pub fn variable(nvars: usize, order: usize, var: usize, value: f64) -> Jet {
        assert!(var < nvars);
        let mut j = Jet::constant(nvars, order, value);
        if order >= 1 {
            j.c[1 + var] = 1.0;
        }
        j
    }

    /// Jets for the coordinate functions around a point.
    pub fn seed(point: &[f64], order: usize) -> Vec<Jet> {
        (0..point.len()).map(|i| Jet::variable(point.len(), order, i, point[i])).collect()
    }

    /// A constant in the same variables and order as `self`.
    pub fn lift_const(&self, value: f64) -> Jet {
        Jet::constant(self.layout.nvars, self.order, value)
    }

    pub fn zero_like(&self) -> Jet {
        self.lift_const(0.0)
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&x| x == 0.0)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Raw Taylor coefficient for the given exponent vector.
    pub fn coefficient(&self, exponents: &[u8]) -> f64 {
        self.layout.exps[..self.c.len()]
            .iter()
            .position(|e| e.as_slice() == exponents)
            .map_or(0.0, |i| self.c[i])
    }

    pub fn gradient(&self) -> Vec<f64> {
        assert!(self.order >= 1, "gradient needs an order >= 1 jet");
        self.c[1..=self.layout.nvars].to_vec()
    }

    pub fn hessian(&self) -> Vec<Vec<f64>> {
        assert!(self.order >= 2, "hessian needs an order >= 2 jet");
        let n = self.layout.nvars;
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let first = self.layout.raise[i][0].expect("degree 1") as usize;
                let k = self.layout.raise[j][first].expect("degree 2") as usize;
                h[i][j] = if i == j { 2.0 * self.c[k] } else { self.c[k] };
            }
        }
        h
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        Jet { layout: self.layout.clone(), order, c: self.c[..self.layout.count[order]].to_vec() }
    }

    /// Partial derivative with respect to variable `var`; the result has order - 1.
    pub fn partial(&self, var: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let n = self.layout.count[order];
        let raise = &self.layout.raise[var];
        let c = (0..n)
            .map(|i| {
                let k = raise[i].expect("raised monomial within order") as usize;
                (self.layout.exps[i][var] as f64 + 1.0) * self.c[k]
            })
            .collect();
        Jet { layout: self.layout.clone(), order, c }
    }

    fn same_vars(&self, other: &Jet) {
        assert_eq!(self.layout.nvars, other.layout.nvars, "jets over different variable sets");
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { layout: self.layout.clone(), order: self.order, c: self.c.iter().map(|x| x * s).collect() }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        self.same_vars(other);
        let order = self.order.min(other.order);
        let n = self.layout.count[order];
        let c = (0..n).map(|i| f(self.c[i], other.c[i])).collect();
        Jet { layout: self.layout.clone(), order, c }
    }

    fn mul_jet(&self, other: &Jet) -> Jet {
        self.same_vars(other);
        let order = self.order.min(other.order);
        let mut c = vec![0.0; self.layout.count[order]];
        for &(i, j, k) in &self.layout.mul[..self.layout.mul_end[order]] {
            c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        Jet { layout: self.layout.clone(), order, c }
    }

    /// Evaluates `sum_k coeffs[k] * (self - value)^k`, the Taylor series of a
    /// univariate function whose normalized derivatives at `value` are `coeffs`.
    fn apply_series(&self, coeffs: &[f64]) -> Jet {
        debug_assert_eq!(coeffs.len(), self.order + 1);
        let mut nil = self.clone();
        nil.c[0] = 0.0;
        let mut r = self.lift_const(coeffs[self.order]);
        for k in (0..self.order).rev() {
            r = r.mul_jet(&nil).add_scalar(coeffs[k]);
        }
        r
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(JetError::Domain("division by zero"));
        }
        let coeffs: Vec<f64> = (0..=self.order).map(|k| (-1f64).powi(k as i32) / a.powi(k as i32 + 1)).collect();
        Ok(self.apply_series(&coeffs))
    }

    pub fn div(&self, other: &Jet) -> Result<Jet, JetError> {
        Ok(self.mul_jet(&other.recip()?))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut coeffs = vec![e; self.order + 1];
        let mut fact = 1.0;
        for (k, c) in coeffs.iter_mut().enumerate().skip(1) {
            fact *= k as f64;
            *c = e / fact;
        }
        self.apply_series(&coeffs)
    }

    pub fn ln(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a <= 0.0 {
            return Err(JetError::Domain("logarithm of a non-positive value"));
        }
        let coeffs: Vec<f64> = (0..=self.order)
            .map(|k| if k == 0 { a.ln() } else { (-1f64).powi(k as i32 + 1) / (k as f64 * a.powi(k as i32)) })
            .collect();
        Ok(self.apply_series(&coeffs))
    }

    fn trig(&self, phase: usize) -> Jet {
        let a = self.value();
        let cyc = [a.sin(), a.cos(), -a.sin(), -a.cos()];
        let mut fact = 1.0;
        let coeffs: Vec<f64> = (0..=self.order)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                cyc[(k + phase) % 4] / fact
            })
            .collect();
        self.apply_series(&coeffs)
    }

    pub fn sin(&self) -> Jet {
        self.trig(0)
    }

    pub fn cos(&self) -> Jet {
        self.trig(1)
    }

    pub fn tan(&self) -> Result<Jet, JetError> {
        self.sin().div(&self.cos()).map_err(|_| JetError::Domain("tangent at a pole"))
    }

    /// Real power with constant exponent; the base must be positive unless the
    /// exponent is an integer.
    pub fn powf(&self, r: f64) -> Result<Jet, JetError> {
        if r.fract() == 0.0 && r.abs() <= 64.0 {
            return self.powi(r as i32);
        }
        let a = self.value();
        if a < 0.0 {
            return Err(JetError::Domain("non-integer power of a negative value"));
        }
        if a == 0.0 {
            return Err(JetError::Domain("non-integer power at zero is not differentiable"));
        }
        let mut coeffs = Vec::with_capacity(self.order + 1);
        let mut binom = 1.0;
        for k in 0..=self.order {
            if k > 0 {
                binom *= (r - (k as f64 - 1.0)) / k as f64;
            }
            coeffs.push(binom * a.powf(r - k as f64));
        }
        Ok(self.apply_series(&coeffs))
    }

    pub fn powi(&self, n: i32) -> Result<Jet, JetError> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut result = self.lift_const(1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_jet(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_jet(&base);
            }
        }
        Ok(result)
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        if self.value() <= 0.0 {
            return Err(JetError::Domain("square root of a non-positive value"));
        }
        self.powf(0.5)
    }

    /// Power with a jet-valued exponent, `exp(e * ln(self))`.
    pub fn pow(&self, e: &Jet) -> Result<Jet, JetError> {
        if e.c[1..].iter().all(|&x| x == 0.0) {
            return self.powf(e.value()).map(|r| r.truncate(e.order.min(self.order)));
        }
        Ok(e.mul_jet(&self.ln()?).exp())
    }

    pub fn abs(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a == 0.0 {
            return Err(JetError::Domain("absolute value is not differentiable at zero"));
        }
        Ok(if a > 0.0 { self.clone() } else { -self })
    }

    /// Two-argument arctangent `atan2(y, x)`.
    pub fn atan2(y: &Jet, x: &Jet) -> Result<Jet, JetError> {
        y.same_vars(x);
        let (y0, x0) = (y.value(), x.value());
        if x0 == 0.0 && y0 == 0.0 {
            return Err(JetError::Domain("atan2 at the origin"));
        }
        // atan2(y, x) = atan2(y0, x0) + atan(w) with w = (x0 y - y0 x) / (x0 x + y0 y),
        // and w has zero constant term.
        let num = &y.scale(x0) - &x.scale(y0);
        let den = &x.scale(x0) + &y.scale(y0);
        let mut w = num.div(&den)?;
        w.c[0] = 0.0;
        let order = w.order;
        let coeffs: Vec<f64> = (0..=order)
            .map(|k| match k {
                0 => y0.atan2(x0),
                k if k % 2 == 1 => (-1f64).powi(((k - 1) / 2) as i32) / k as f64,
                _ => 0.0,
            })
            .collect();
        let mut r = w.apply_series(&coeffs);
        r.c[0] = y0.atan2(x0);
        Ok(r)
    }

    /// Substitutes inner jets for this jet's variables: returns the expansion
    /// of `f(g(q))` around `q`, where `self` expands `f` around `g(q0)` and the
    /// constant terms of `inner` are ignored.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        assert_eq!(inner.len(), self.layout.nvars, "compose arity mismatch");
        let template = inner.first().map_or_else(|| Jet::constant(0, self.order, 0.0), |j| j.clone());
        let order = inner.iter().map(|j| j.order).min().unwrap_or(self.order).min(self.order);
        let deltas: Vec<Jet> = inner
            .iter()
            .map(|j| {
                let mut d = j.truncate(order);
                d.c[0] = 0.0;
                d
            })
            .collect();
        let n = self.layout.count[order];
        let mut monos: Vec<Jet> = Vec::with_capacity(n);
        monos.push(Jet::constant(template.nvars(), order, 1.0));
        for idx in 1..n {
            let (lower, var) = self.layout.lower_first[idx].expect("nonconstant monomial");
            let m = monos[lower as usize].mul_jet(&deltas[var as usize]);
            monos.push(m);
        }
        let mut acc = vec![0.0; monos[0].c.len()];
        for (idx, m) in monos.iter().enumerate() {
            let coef = self.c[idx];
            if coef != 0.0 {
                for (a, b) in acc.iter_mut().zip(&m.c) {
                    *a += coef * b;
                }
            }
        }
        Jet { layout: monos[0].layout.clone(), order, c: acc }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_jet(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Order-2 jet: value, gradient and dense symmetric Hessian.
#[derive(Debug, Clone)]
pub struct Jet2Scalar {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

impl From<&Jet> for Jet2Scalar {
    fn from(j: &Jet) -> Self {
        Jet2Scalar { value: j.value(), gradient: j.gradient(), hessian: j.hessian() }
    }
}

/// Sum of products of two jet slices.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    assert_eq!(a.len(), b.len());
    let mut it = a.iter().zip(b);
    let (x, y) = it.next().expect("nonempty dot product");
    let mut acc = x * y;
    for (x, y) in it {
        acc = &acc + &(x * y);
    }
    acc
}
