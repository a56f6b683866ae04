//! Pointwise tensor calculus on a coordinate chart.
//!
//! Every field is a [`FieldSource`]: something that can produce the Taylor
//! germs of its components around a point to a requested order. Derived fields
//! (brackets, exterior derivatives, solutions of linear systems) are lazy
//! closures over their constituents, asking them for one more order whenever
//! a derivative is taken.
//!
//! Conventions: 2-form components are stored row-major as `w[i * n + j] =
//! w(e_i, e_j)`; endomorphism entries as `a[i * n + j] = (A e_j)_i`;
//! `(a ^ b)(u, v) = a(u) b(v) - a(v) b(u)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::jet::{self, Jet, MAX_ORDER};

pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Coordinate names, a sampling box and domain exclusions.
#[derive(Clone)]
pub struct Chart {
    coords: Arc<[String]>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    constraints: Vec<(String, Predicate)>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("coords", &self.coords)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("constraints", &self.constraints.iter().map(|c| &c.0).collect::<Vec<_>>())
            .finish()
    }
}

impl Chart {
    pub fn new(coords: &[impl AsRef<str>], lo: Vec<f64>, hi: Vec<f64>) -> Chart {
        assert_eq!(coords.len(), lo.len());
        assert_eq!(coords.len(), hi.len());
        Chart { coords: coords.iter().map(|c| c.as_ref().to_string()).collect(), lo, hi, constraints: Vec::new() }
    }

    /// Adds a domain condition; `name` is reported when a point violates it.
    pub fn with_constraint(mut self, name: &str, pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Chart {
        self.constraints.push((name.to_string(), Arc::new(pred)));
        self
    }

    /// Requires an expression over this chart to be strictly positive.
    pub fn with_positive(self, e: Expression) -> Chart {
        let name = format!("{e} > 0");
        self.with_constraint(&name, move |p| e.evaluate(p).is_ok_and(|v| v > 0.0))
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn violated(&self, p: &[f64]) -> Option<&str> {
        if p.len() != self.dim() {
            return Some("dimension");
        }
        self.constraints.iter().find(|(_, f)| !f(p)).map(|(n, _)| n.as_str())
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.violated(p).is_none()
    }

    /// Seeded uniform draws from the box, rejecting points outside the domain.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n);
        let mut tries = 0usize;
        while out.len() < n {
            tries += 1;
            if tries > 1000 * (n + 1) {
                return Err(Error::Domain("rejection sampling rate too low".into()));
            }
            let p: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(&a, &b)| rng.gen_range(a..b)).collect();
            if self.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// Produces component germs around a point.
pub trait FieldSource: Send + Sync {
    fn nvars(&self) -> usize;
    fn len(&self) -> usize;
    fn germ(&self, p: &[f64], order: usize) -> Result<Vec<Jet>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn at(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(self.germ(p, 0)?.iter().map(Jet::value).collect())
    }
}

pub type Field = Arc<dyn FieldSource>;

/// Order needed from constituents when one derivative is taken.
pub fn raise(order: usize) -> Result<usize> {
    if order >= MAX_ORDER {
        return Err(jet::JetError::OrderTooHigh { requested: order + 1, max: MAX_ORDER }.into());
    }
    Ok(order + 1)
}

pub struct ExprField {
    nvars: usize,
    exprs: Vec<Expression>,
}

impl FieldSource for ExprField {
    fn nvars(&self) -> usize {
        self.nvars
    }

    fn len(&self) -> usize {
        self.exprs.len()
    }

    fn germ(&self, p: &[f64], order: usize) -> Result<Vec<Jet>> {
        if p.len() != self.nvars {
            return Err(Error::Dimension { expected: self.nvars, got: p.len() });
        }
        let seeds = Jet::seed(p, order);
        self.exprs.iter().map(|e| e.eval_jets(&seeds).map_err(Error::from)).collect()
    }
}

pub fn expr_field(nvars: usize, exprs: Vec<Expression>) -> Field {
    assert!(exprs.iter().all(|e| e.coords().len() == nvars));
    Arc::new(ExprField { nvars, exprs })
}

/// Parses one expression per component over `coords`.
pub fn parse_field(coords: &[impl AsRef<str>], sources: &[&str]) -> Result<Field> {
    let exprs = sources.iter().map(|s| Expression::parse(s, coords)).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(expr_field(coords.len(), exprs))
}

type GermFn = dyn Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync;

pub struct FnField {
    nvars: usize,
    len: usize,
    f: Box<GermFn>,
}

impl FieldSource for FnField {
    fn nvars(&self) -> usize {
        self.nvars
    }

    fn len(&self) -> usize {
        self.len
    }

    fn germ(&self, p: &[f64], order: usize) -> Result<Vec<Jet>> {
        if p.len() != self.nvars {
            return Err(Error::Dimension { expected: self.nvars, got: p.len() });
        }
        let g = (self.f)(p, order)?;
        debug_assert_eq!(g.len(), self.len);
        Ok(g)
    }
}

pub fn fn_field(
    nvars: usize,
    len: usize,
    f: impl Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync + 'static,
) -> Field {
    Arc::new(FnField { nvars, len, f: Box::new(f) })
}

pub fn const_field(nvars: usize, values: Vec<f64>) -> Field {
    let len = values.len();
    fn_field(nvars, len, move |p, k| Ok(values.iter().map(|&v| Jet::constant(p.len(), k, v)).collect()))
}

/// `field ∘ map`, where `map` has one component per variable of `field`.
pub fn compose_field(field: Field, map: Field) -> Field {
    assert_eq!(field.nvars(), map.len());
    fn_field(map.nvars(), field.len(), move |p, k| {
        let inner = map.germ(p, k)?;
        let q: Vec<f64> = inner.iter().map(Jet::value).collect();
        Ok(field.germ(&q, k)?.iter().map(|g| g.compose(&inner)).collect())
    })
}

pub fn values(germ: &[Jet]) -> Vec<f64> {
    germ.iter().map(Jet::value).collect()
}

/// Lifts plain numbers to constant jets shaped like `like`.
pub fn lift(like: &Jet, v: &[f64]) -> Vec<Jet> {
    v.iter().map(|&x| like.lift_const(x)).collect()
}

pub fn add_germs(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub_germs(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale_germ(s: &Jet, v: &[Jet]) -> Vec<Jet> {
    v.iter().map(|x| s * x).collect()
}

/// Directional derivative `X(f)`; `f` needs one order more than the result.
pub fn derivative(f: &Jet, x: &[Jet]) -> Jet {
    let mut acc = f.partial(0) * x[0].clone();
    for (j, xj) in x.iter().enumerate().skip(1) {
        acc = &acc + &(&f.partial(j) * xj);
    }
    acc
}

/// `[X, Y]^i = X^j d_j Y^i - Y^j d_j X^i`, dropping one order.
pub fn bracket_germ(x: &[Jet], y: &[Jet]) -> Vec<Jet> {
    (0..x.len()).map(|i| &derivative(&y[i], x) - &derivative(&x[i], y)).collect()
}

/// `A v` for a row-major matrix germ.
pub fn apply_matrix(a: &[Jet], v: &[Jet]) -> Vec<Jet> {
    let n = v.len();
    (0..n).map(|i| jet::dot(&a[i * n..(i + 1) * n], v)).collect()
}

pub fn contract1(w: &[Jet], v: &[Jet]) -> Jet {
    jet::dot(w, v)
}

pub fn contract2(w: &[Jet], u: &[Jet], v: &[Jet]) -> Jet {
    let n = u.len();
    let wu: Vec<Jet> = (0..n).map(|j| jet::dot(&(0..n).map(|i| w[i * n + j].clone()).collect::<Vec<_>>(), u)).collect();
    jet::dot(&wu, v)
}

pub fn eval1(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn eval2(w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        if u[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            s += w[i * n + j] * u[i] * v[j];
        }
    }
    s
}

#[derive(Clone)]
pub struct VectorField(pub Field);

impl VectorField {
    pub fn new(field: Field) -> VectorField {
        assert_eq!(field.nvars(), field.len(), "vector field must have one component per coordinate");
        VectorField(field)
    }

    pub fn parse(coords: &[impl AsRef<str>], sources: &[&str]) -> Result<VectorField> {
        if sources.len() != coords.len() {
            return Err(Error::Dimension { expected: coords.len(), got: sources.len() });
        }
        Ok(VectorField(parse_field(coords, sources)?))
    }

    pub fn constant(v: Vec<f64>) -> VectorField {
        VectorField(const_field(v.len(), v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn germ(&self, p: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.0.germ(p, order)
    }

    pub fn at(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.0.at(p)
    }

    pub fn bracket(&self, other: &VectorField) -> Result<VectorField> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: other.dim() });
        }
        let (x, y) = (self.0.clone(), other.0.clone());
        Ok(VectorField(fn_field(self.dim(), self.dim(), move |p, k| {
            let k1 = raise(k)?;
            Ok(bracket_germ(&x.germ(p, k1)?, &y.germ(p, k1)?))
        })))
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        let (x, y) = (self.0.clone(), other.0.clone());
        VectorField(fn_field(self.dim(), self.dim(), move |p, k| Ok(add_germs(&x.germ(p, k)?, &y.germ(p, k)?))))
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        let (x, y) = (self.0.clone(), other.0.clone());
        VectorField(fn_field(self.dim(), self.dim(), move |p, k| Ok(sub_germs(&x.germ(p, k)?, &y.germ(p, k)?))))
    }

    /// `f X` for a scalar field `f`.
    pub fn scaled(&self, f: &Field) -> VectorField {
        let (x, f) = (self.0.clone(), f.clone());
        VectorField(fn_field(self.dim(), self.dim(), move |p, k| Ok(scale_germ(&f.germ(p, k)?[0], &x.germ(p, k)?))))
    }
}

/// `[X, Y]` at `p`.
pub fn lie_bracket(x: &VectorField, y: &VectorField, p: &[f64]) -> Result<Vec<f64>> {
    x.bracket(y)?.at(p)
}

pub type Multilinear = dyn Fn(&[f64], &[&[f64]]) -> Result<f64> + Send + Sync;

/// A differential form. Degrees 0..=2 can be held as component germs; any
/// degree can be held as a pointwise alternating evaluator.
#[derive(Clone)]
pub enum KForm {
    Components { degree: usize, field: Field },
    Evaluator { degree: usize, nvars: usize, eval: Arc<Multilinear> },
}

impl fmt::Debug for KForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KForm::Components { degree, field } => write!(f, "KForm::Components(degree {degree}, dim {})", field.nvars()),
            KForm::Evaluator { degree, nvars, .. } => write!(f, "KForm::Evaluator(degree {degree}, dim {nvars})"),
        }
    }
}

fn expected_len(degree: usize, n: usize) -> usize {
    match degree {
        0 => 1,
        1 => n,
        _ => n * n,
    }
}

impl KForm {
    pub fn from_field(degree: usize, field: Field) -> KForm {
        assert!(degree <= 2);
        assert_eq!(field.len(), expected_len(degree, field.nvars()));
        KForm::Components { degree, field }
    }

    pub fn scalar(field: Field) -> KForm {
        KForm::from_field(0, field)
    }

    pub fn one_form(field: Field) -> KForm {
        KForm::from_field(1, field)
    }

    pub fn parse_one_form(coords: &[impl AsRef<str>], sources: &[&str]) -> Result<KForm> {
        if sources.len() != coords.len() {
            return Err(Error::Dimension { expected: coords.len(), got: sources.len() });
        }
        Ok(KForm::one_form(parse_field(coords, sources)?))
    }

    pub fn parse_function(coords: &[impl AsRef<str>], source: &str) -> Result<KForm> {
        Ok(KForm::scalar(parse_field(coords, &[source])?))
    }

    pub fn zero(degree: usize, nvars: usize) -> KForm {
        if degree <= 2 {
            KForm::from_field(degree, const_field(nvars, vec![0.0; expected_len(degree, nvars)]))
        } else {
            KForm::Evaluator { degree, nvars, eval: Arc::new(|_, _| Ok(0.0)) }
        }
    }

    pub fn evaluator(degree: usize, nvars: usize, f: impl Fn(&[f64], &[&[f64]]) -> Result<f64> + Send + Sync + 'static) -> KForm {
        KForm::Evaluator { degree, nvars, eval: Arc::new(f) }
    }

    pub fn degree(&self) -> usize {
        match self {
            KForm::Components { degree, .. } | KForm::Evaluator { degree, .. } => *degree,
        }
    }

    pub fn nvars(&self) -> usize {
        match self {
            KForm::Components { field, .. } => field.nvars(),
            KForm::Evaluator { nvars, .. } => *nvars,
        }
    }

    pub fn field(&self) -> Option<&Field> {
        match self {
            KForm::Components { field, .. } => Some(field),
            KForm::Evaluator { .. } => None,
        }
    }

    fn components(&self, context: &'static str) -> Result<&Field> {
        self.field().ok_or(Error::Degree { degree: self.degree(), context })
    }

    pub fn germ(&self, p: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.components("component germs")?.germ(p, order)
    }

    /// Evaluates on `degree` tangent vectors at `p`.
    pub fn eval(&self, p: &[f64], vectors: &[&[f64]]) -> Result<f64> {
        if vectors.len() != self.degree() {
            return Err(Error::Degree { degree: vectors.len(), context: "wrong number of arguments" });
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != self.nvars()) {
            return Err(Error::Dimension { expected: self.nvars(), got: v.len() });
        }
        match self {
            KForm::Components { degree, field } => {
                let c = field.at(p)?;
                Ok(match degree {
                    0 => c[0],
                    1 => eval1(&c, vectors[0]),
                    _ => eval2(&c, vectors[0], vectors[1]),
                })
            }
            KForm::Evaluator { eval, .. } => eval(p, vectors),
        }
    }

    /// Exterior derivative. Degree 0 and 1 stay in component form; degree 2
    /// becomes an evaluator of degree 3.
    pub fn d(&self) -> Result<KForm> {
        let n = self.nvars();
        if self.degree() + 1 > n {
            return Err(Error::Degree { degree: self.degree() + 1, context: "exceeds chart dimension" });
        }
        let f = self.components("exterior derivative of an evaluator form")?.clone();
        Ok(match self.degree() {
            0 => KForm::from_field(
                1,
                fn_field(n, n, move |p, k| {
                    let g = f.germ(p, raise(k)?)?;
                    Ok((0..n).map(|i| g[0].partial(i)).collect())
                }),
            ),
            1 => KForm::from_field(
                2,
                fn_field(n, n * n, move |p, k| {
                    let g = f.germ(p, raise(k)?)?;
                    Ok(d1_germ(&g))
                }),
            ),
            _ => KForm::evaluator(3, n, move |p, vs| {
                let g = f.germ(p, 1)?;
                let d = d2_values(&g, n);
                Ok(eval3(&d, n, vs[0], vs[1], vs[2]))
            }),
        })
    }

    pub fn interior(&self, x: &VectorField) -> Result<KForm> {
        let n = self.nvars();
        if self.degree() == 0 {
            return Err(Error::Degree { degree: 0, context: "interior product of a function" });
        }
        Ok(match self {
            KForm::Components { degree: 1, field } => {
                let (f, x) = (field.clone(), x.0.clone());
                KForm::scalar(fn_field(n, 1, move |p, k| Ok(vec![contract1(&f.germ(p, k)?, &x.germ(p, k)?)])))
            }
            KForm::Components { field, .. } => {
                let (f, x) = (field.clone(), x.0.clone());
                KForm::one_form(fn_field(n, n, move |p, k| {
                    let w = f.germ(p, k)?;
                    let v = x.germ(p, k)?;
                    Ok((0..n).map(|j| jet::dot(&(0..n).map(|i| w[i * n + j].clone()).collect::<Vec<_>>(), &v)).collect())
                }))
            }
            KForm::Evaluator { degree, eval, .. } => {
                let (e, x) = (eval.clone(), x.clone());
                KForm::evaluator(degree - 1, n, move |p, vs| {
                    let xv = x.at(p)?;
                    let mut args: Vec<&[f64]> = vec![&xv];
                    args.extend_from_slice(vs);
                    e(p, &args)
                })
            }
        })
    }

    pub fn add(&self, other: &KForm) -> Result<KForm> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &KForm) -> Result<KForm> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &KForm, s: f64) -> Result<KForm> {
        if self.degree() != other.degree() {
            return Err(Error::Degree { degree: other.degree(), context: "sum of forms of different degree" });
        }
        let n = self.nvars();
        if let (KForm::Components { field: a, .. }, KForm::Components { field: b, .. }) = (self, other) {
            let (a, b) = (a.clone(), b.clone());
            let len = a.len();
            return Ok(KForm::from_field(
                self.degree(),
                fn_field(n, len, move |p, k| {
                    Ok(a.germ(p, k)?.iter().zip(b.germ(p, k)?).map(|(x, y)| x + &y.scale(s)).collect())
                }),
            ));
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(KForm::evaluator(self.degree(), n, move |p, vs| Ok(a.eval(p, vs)? + s * b.eval(p, vs)?)))
    }

    /// `f * self` for a scalar field `f`.
    pub fn scaled(&self, f: &Field) -> KForm {
        let n = self.nvars();
        match self {
            KForm::Components { degree, field } => {
                let (a, f) = (field.clone(), f.clone());
                KForm::from_field(*degree, fn_field(n, a.len(), move |p, k| Ok(scale_germ(&f.germ(p, k)?[0], &a.germ(p, k)?))))
            }
            KForm::Evaluator { degree, eval, .. } => {
                let (e, f) = (eval.clone(), f.clone());
                KForm::evaluator(*degree, n, move |p, vs| Ok(f.at(p)?[0] * e(p, vs)?))
            }
        }
    }

    pub fn wedge(&self, other: &KForm) -> Result<KForm> {
        let n = self.nvars();
        if other.nvars() != n {
            return Err(Error::Dimension { expected: n, got: other.nvars() });
        }
        let (ka, kb) = (self.degree(), other.degree());
        if let (KForm::Components { field: a, .. }, KForm::Components { field: b, .. }) = (self, other) {
            if ka + kb <= 2 {
                let (a, b) = (a.clone(), b.clone());
                let field = match (ka, kb) {
                    (0, _) => fn_field(n, b.len(), move |p, k| Ok(scale_germ(&a.germ(p, k)?[0], &b.germ(p, k)?))),
                    (_, 0) => fn_field(n, a.len(), move |p, k| Ok(scale_germ(&b.germ(p, k)?[0], &a.germ(p, k)?))),
                    _ => fn_field(n, n * n, move |p, k| Ok(wedge11_germ(&a.germ(p, k)?, &b.germ(p, k)?))),
                };
                return Ok(KForm::from_field(ka + kb, field));
            }
        }
        let (a, b) = (self.clone(), other.clone());
        let shuffles = shuffles(ka, kb);
        Ok(KForm::evaluator(ka + kb, n, move |p, vs| {
            let mut s = 0.0;
            for (sign, left, right) in &shuffles {
                let l: Vec<&[f64]> = left.iter().map(|&i| vs[i]).collect();
                let r: Vec<&[f64]> = right.iter().map(|&i| vs[i]).collect();
                s += sign * a.eval(p, &l)? * b.eval(p, &r)?;
            }
            Ok(s)
        }))
    }

    /// Pullback along `map`, whose components give the target coordinates as
    /// functions on the source chart.
    pub fn pullback(&self, map: &Field) -> Result<KForm> {
        if map.len() != self.nvars() {
            return Err(Error::Dimension { expected: self.nvars(), got: map.len() });
        }
        let m = map.nvars();
        let w = self.components("pullback of an evaluator form")?.clone();
        let map = map.clone();
        let degree = self.degree();
        let field = fn_field(m, expected_len(degree, m), move |p, k| {
            let fg = map.germ(p, raise(k)?)?;
            let q = values(&fg);
            let inner: Vec<Jet> = fg.iter().map(|g| g.truncate(k)).collect();
            let wg: Vec<Jet> = w.germ(&q, k)?.iter().map(|c| c.compose(&inner)).collect();
            let jac: Vec<Vec<Jet>> = fg.iter().map(|g| (0..m).map(|j| g.partial(j)).collect()).collect();
            let t = fg.len();
            Ok(match degree {
                0 => wg,
                1 => (0..m).map(|j| jet::dot(&wg, &(0..t).map(|i| jac[i][j].clone()).collect::<Vec<_>>())).collect(),
                _ => {
                    let mut out = Vec::with_capacity(m * m);
                    for i in 0..m {
                        for j in 0..m {
                            let ui: Vec<Jet> = (0..t).map(|a| jac[a][i].clone()).collect();
                            let uj: Vec<Jet> = (0..t).map(|a| jac[a][j].clone()).collect();
                            out.push(contract2(&wg, &ui, &uj));
                        }
                    }
                    out
                }
            })
        });
        Ok(KForm::from_field(degree, field))
    }

    /// Lie derivative of a 1-form, `(L_X w)_j = X^i d_i w_j + w_i d_j X^i`.
    pub fn lie_derivative(&self, x: &VectorField) -> Result<KForm> {
        if self.degree() != 1 {
            return Err(Error::Degree { degree: self.degree(), context: "Lie derivative of non-1-forms" });
        }
        let n = self.nvars();
        let (w, x) = (self.components("Lie derivative")?.clone(), x.0.clone());
        Ok(KForm::one_form(fn_field(n, n, move |p, k| {
            let k1 = raise(k)?;
            let wg = w.germ(p, k1)?;
            let xg = x.germ(p, k1)?;
            Ok((0..n)
                .map(|j| {
                    let a = derivative(&wg[j], &xg);
                    let b: Vec<Jet> = xg.iter().map(|xi| xi.partial(j)).collect();
                    let w0: Vec<Jet> = wg.iter().map(|c| c.truncate(k)).collect();
                    &a + &jet::dot(&w0, &b)
                })
                .collect())
        })))
    }
}

/// `(dw)_ij = d_i w_j - d_j w_i`.
pub fn d1_germ(w: &[Jet]) -> Vec<Jet> {
    let n = w.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(&w[j].partial(i) - &w[i].partial(j));
        }
    }
    out
}

pub fn wedge11_germ(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    let n = a.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(&(&a[i] * &b[j]) - &(&a[j] * &b[i]));
        }
    }
    out
}

/// Components `(dw)_ijk = d_i w_jk + d_j w_ki + d_k w_ij` of a 2-form germ of order >= 1.
pub fn d2_values(w: &[Jet], n: usize) -> Vec<f64> {
    let grads: Vec<Vec<f64>> = w.iter().map(Jet::gradient).collect();
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[(i * n + j) * n + k] = grads[j * n + k][i] + grads[k * n + i][j] + grads[i * n + j][k];
            }
        }
    }
    out
}

pub fn eval3(d: &[f64], n: usize, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        if u[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if v[j] == 0.0 {
                continue;
            }
            for k in 0..n {
                s += d[(i * n + j) * n + k] * u[i] * v[j] * w[k];
            }
        }
    }
    s
}

/// (ab)-shuffles as (sign, positions for the left factor, positions for the right).
fn shuffles(a: usize, b: usize) -> Vec<(f64, Vec<usize>, Vec<usize>)> {
    let total = a + b;
    let mut out = Vec::new();
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != a {
            continue;
        }
        let left: Vec<usize> = (0..total).filter(|i| mask & (1 << i) != 0).collect();
        let right: Vec<usize> = (0..total).filter(|i| mask & (1 << i) == 0).collect();
        let inversions: usize = left.iter().map(|&l| right.iter().filter(|&&r| r < l).count()).sum();
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        out.push((sign, left, right));
    }
    out
}

pub fn exterior_derivative(w: &KForm, p: &[f64], vectors: &[&[f64]]) -> Result<f64> {
    w.d()?.eval(p, vectors)
}

/// `(d b + w g ^ b)` evaluated; the trivialized covariant derivative on
/// weight-`w` densities.
pub fn weighted_ext_derivative(b: &KForm, g: &KForm, w: i32, p: &[f64], vectors: &[&[f64]]) -> Result<f64> {
    let db = exterior_derivative(b, p, vectors)?;
    if w == 0 {
        return Ok(db);
    }
    Ok(db + w as f64 * g.wedge(b)?.eval(p, vectors)?)
}

pub fn interior_product(x: &VectorField, w: &KForm) -> Result<KForm> {
    w.interior(x)
}

pub fn wedge(a: &KForm, b: &KForm) -> Result<KForm> {
    a.wedge(b)
}

pub fn pullback(map: &Field, w: &KForm) -> Result<KForm> {
    w.pullback(map)
}

/// Square matrix of fields acting on tangent vectors.
#[derive(Clone)]
pub struct EndomorphismField(pub Field);

impl EndomorphismField {
    pub fn new(field: Field) -> EndomorphismField {
        let n = field.nvars();
        assert_eq!(field.len(), n * n, "endomorphism needs n*n entries");
        EndomorphismField(field)
    }

    /// `rows[i][j]` is the i-th component of `A e_j`.
    pub fn parse(coords: &[impl AsRef<str>], rows: &[Vec<&str>]) -> Result<EndomorphismField> {
        let n = coords.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: rows.len() });
        }
        let flat: Vec<&str> = rows.iter().flatten().copied().collect();
        Ok(EndomorphismField(parse_field(coords, &flat)?))
    }

    pub fn dim(&self) -> usize {
        self.0.nvars()
    }

    pub fn germ(&self, p: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.0.germ(p, order)
    }

    pub fn apply(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let a = self.0.at(p)?;
        let n = v.len();
        Ok((0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect())
    }

    /// The vector field `A X`.
    pub fn applied(&self, x: &VectorField) -> VectorField {
        let (a, x) = (self.0.clone(), x.0.clone());
        let n = self.dim();
        VectorField(fn_field(n, n, move |p, k| Ok(apply_matrix(&a.germ(p, k)?, &x.germ(p, k)?))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn coordinate_fields_commute() {
        let x = VectorField::constant(vec![1.0, 0.0]);
        let y = VectorField::constant(vec![0.0, 1.0]);
        assert_eq!(lie_bracket(&x, &y, &[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn bracket_of_rotation_parts() {
        let c = ["x", "y"];
        let x = VectorField::parse(&c, &["0", "x"]).unwrap();
        let y = VectorField::parse(&c, &["y", "0"]).unwrap();
        assert_eq!(lie_bracket(&x, &y, &[1.0, 2.0]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(lie_bracket(&x, &x, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn d_of_x_dy() {
        let c = ["x", "y"];
        let w = KForm::parse_one_form(&c, &["0", "x"]).unwrap();
        let v = exterior_derivative(&w, &[0.7, -1.2], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(v, 1.0);
        let k = KForm::parse_one_form(&c, &["3", "-2"]).unwrap();
        assert_eq!(exterior_derivative(&k, &[0.7, -1.2], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(), 0.0);
    }

    #[test]
    fn degree_beyond_dimension_is_rejected() {
        let c = ["x"];
        let w = KForm::parse_one_form(&c, &["x"]).unwrap();
        assert!(matches!(w.d(), Err(Error::Degree { .. })));
    }

    #[test]
    fn weighted_derivative_with_zero_weight_is_plain() {
        let c = ["x", "y", "z"];
        let b = KForm::parse_one_form(&c, &["y*z", "sin(x)", "x*x"]).unwrap();
        let g = KForm::parse_one_form(&c, &["z", "1", "x"]).unwrap();
        let p = [0.1, 0.2, 0.3];
        let (u, v) = ([1.0, 2.0, 0.5], [-0.3, 0.4, 1.0]);
        let plain = exterior_derivative(&b, &p, &[&u, &v]).unwrap();
        assert_eq!(weighted_ext_derivative(&b, &g, 0, &p, &[&u, &v]).unwrap(), plain);
        let w1 = weighted_ext_derivative(&b, &g, 1, &p, &[&u, &v]).unwrap();
        let gb = g.eval(&p, &[&u]).unwrap() * b.eval(&p, &[&v]).unwrap()
            - g.eval(&p, &[&v]).unwrap() * b.eval(&p, &[&u]).unwrap();
        assert!(close(w1, plain + gb, 1e-14));
    }

    #[test]
    fn wedge_and_interior_leibniz() {
        let c = ["x", "y", "z"];
        let a = KForm::parse_one_form(&c, &["x", "y*z", "1"]).unwrap();
        let b = KForm::parse_one_form(&c, &["z", "x*x", "-y"]).unwrap();
        let x = VectorField::parse(&c, &["1", "z", "x"]).unwrap();
        let p = [0.4, -0.2, 1.1];
        let lhs = a.wedge(&b).unwrap().interior(&x).unwrap();
        let ia = a.interior(&x).unwrap().eval(&p, &[]).unwrap();
        let ib = b.interior(&x).unwrap().eval(&p, &[]).unwrap();
        let v = [0.3, 0.8, -0.5];
        let expected = ia * b.eval(&p, &[&v]).unwrap() - a.eval(&p, &[&v]).unwrap() * ib;
        assert!(close(lhs.eval(&p, &[&v]).unwrap(), expected, 1e-14));
    }

    #[test]
    fn triple_wedge_matches_determinant() {
        let c = ["x", "y", "z"];
        let dx = KForm::parse_one_form(&c, &["1", "0", "0"]).unwrap();
        let dy = KForm::parse_one_form(&c, &["0", "1", "0"]).unwrap();
        let dz = KForm::parse_one_form(&c, &["0", "0", "1"]).unwrap();
        let vol = dx.wedge(&dy).unwrap().wedge(&dz).unwrap();
        let (u, v, w) = ([1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [1.0, 0.0, 1.0]);
        let det = 1.0 * (1.0 - 0.0) - 2.0 * (0.0 - 3.0) + 0.0;
        assert!(close(vol.eval(&[0.0; 3], &[&u, &v, &w]).unwrap(), det, 1e-14));
        assert!(close(vol.eval(&[0.0; 3], &[&v, &u, &w]).unwrap(), -det, 1e-14));
    }

    #[test]
    fn pullback_under_identity() {
        let c = ["x", "y"];
        let w = KForm::parse_one_form(&c, &["x*y", "exp(x)"]).unwrap();
        let id = parse_field(&c, &["x", "y"]).unwrap();
        let pw = w.pullback(&id).unwrap();
        let p = [0.3, 0.9];
        assert_eq!(pw.at_components(&p), w.at_components(&p));
    }

    #[test]
    fn pullback_of_function_is_composition() {
        let c = ["x", "y"];
        let f = KForm::parse_function(&c, "x*y").unwrap();
        let map = parse_field(&c, &["y", "x + y"]).unwrap();
        let pf = f.pullback(&map).unwrap();
        assert!(close(pf.eval(&[2.0, 3.0], &[]).unwrap(), 15.0, 1e-14));
    }

    #[test]
    fn cartan_formula_on_one_form() {
        let c = ["x", "y", "z"];
        let w = KForm::parse_one_form(&c, &["sin(y)*z", "x^2", "exp(x*y)"]).unwrap();
        let x = VectorField::parse(&c, &["y", "z*x", "1 + x"]).unwrap();
        let p = [0.3, -0.4, 0.8];
        let lie = w.lie_derivative(&x).unwrap();
        let cartan = w.d().unwrap().interior(&x).unwrap().add(&w.interior(&x).unwrap().d().unwrap()).unwrap();
        for v in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.2, -0.7, 1.3]] {
            assert!(close(lie.eval(&p, &[&v]).unwrap(), cartan.eval(&p, &[&v]).unwrap(), 1e-12));
        }
    }

    #[test]
    fn sampling_respects_constraints() {
        use rand::SeedableRng;
        let chart = Chart::new(&["x", "y"], vec![-1.0, -1.0], vec![1.0, 1.0])
            .with_positive(Expression::parse("x^2 + y^2 - 0.25", &["x", "y"]).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts = chart.sample(&mut rng, 50).unwrap();
        assert_eq!(pts.len(), 50);
        assert!(pts.iter().all(|p| p[0] * p[0] + p[1] * p[1] > 0.25));
        assert!(chart.violated(&[0.0, 0.0]).is_some_and(|name| name.ends_with("> 0")));
    }

    impl KForm {
        fn at_components(&self, p: &[f64]) -> Vec<f64> {
            self.field().unwrap().at(p).unwrap()
        }
    }
}
