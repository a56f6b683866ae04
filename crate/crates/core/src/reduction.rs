//! Actions by CR-Weyl automorphisms, moment maps and slice-chart quotients.
//!
//! Quotients are never discovered: a [`SliceChart`] embeds a chart of the
//! reduced manifold into the zero set `S` of the moment map, transverse to
//! the orbits. Vectors on `S` are pushed down by solving
//! `v = d iota(w) + sum c_a xi_a`.

use crate::cone::ConeSpace;
use crate::crweyl::{pairing, project_along, CRWeylStructure};
use crate::error::{Error, Result};
use crate::geometry::{
    self, apply_matrix, compose_field, contract2, d1_germ, fn_field, raise, values,
    Chart, EndomorphismField, Field, KForm, VectorField,
};
use crate::jet::Jet;
use crate::linalg::{self, solve_jets};
use crate::report::{Check, Max, ValidationReport};
use crate::tolerance;

/// A chart self-map with its inverse, one component per target coordinate.
#[derive(Clone)]
pub struct DiscreteMap {
    pub name: String,
    pub forward: Field,
    pub inverse: Field,
}

/// Analytic parametrization of (part of) `S`, used for sampling it.
#[derive(Clone)]
pub struct SParam {
    pub chart: Chart,
    pub map: Field,
}

#[derive(Clone)]
pub struct GroupActionSpec {
    pub structure: CRWeylStructure,
    /// Fundamental fields of the identity component.
    pub generators: Vec<VectorField>,
    pub discrete: Vec<DiscreteMap>,
    pub s_param: Option<SParam>,
}

#[derive(Clone)]
pub struct SliceChart {
    pub chart: Chart,
    /// `iota`: reduced coordinates to ambient coordinates, image in `S`.
    pub embedding: Field,
    /// Induced discrete maps on the reduced chart, with `iota o g^ = g o iota`.
    pub discrete: Vec<DiscreteMap>,
}

impl SliceChart {
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// The identity slice of a structure under the trivial action.
    pub fn identity(s: &CRWeylStructure) -> SliceChart {
        let d = s.dim();
        let id = fn_field(d, d, |p, k| Ok(Jet::seed(p, k)));
        SliceChart { chart: s.chart.clone(), embedding: id, discrete: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct Tangency {
    pub tangent: bool,
    /// `(d theta0 + gamma ^ theta0)(v, xi_a)` per generator.
    pub contact: Vec<f64>,
    /// `d Theta_a(v) + gamma(v) Theta_a` per generator.
    pub gradient: Vec<f64>,
}

impl Tangency {
    /// Max disagreement between the two characterizations.
    pub fn disagreement(&self) -> f64 {
        self.contact.iter().zip(&self.gradient).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn gradient_says_tangent(&self, tol: f64) -> bool {
        self.gradient.iter().all(|g| g.abs() <= tol)
    }
}

/// `g0`-orthogonal projectors onto the orbit directions `T`, `I T` and the
/// complement `E` of `H`, as ambient matrices precomposed with the
/// projection onto `H` along `T0`.
#[derive(Debug, Clone)]
pub struct HDecomposition {
    pub dim: usize,
    pub proj_t: Vec<f64>,
    pub proj_it: Vec<f64>,
    pub proj_e: Vec<f64>,
}

impl HDecomposition {
    pub fn apply(m: &[f64], v: &[f64]) -> Vec<f64> {
        let d = v.len();
        (0..d).map(|i| (0..d).map(|j| m[i * d + j] * v[j]).sum()).collect()
    }

    pub fn rank(m: &[f64], d: usize) -> f64 {
        (0..d).map(|i| m[i * d + i]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RhoHomomorphism {
    /// `g^* theta0 = rho(g) theta0` for each discrete generator.
    pub factors: Vec<f64>,
    /// Max relative spread of the sampled factor.
    pub spread: f64,
    /// Max `|g^* theta0 - rho theta0|` relative to `|theta0|`.
    pub proportionality: f64,
    /// Max relative residual of `rho(g h) = rho(g) rho(h)` and `rho(g g^-1) = 1`.
    pub word_residual: f64,
}

impl GroupActionSpec {
    pub fn trivial(structure: CRWeylStructure) -> GroupActionSpec {
        GroupActionSpec { structure, generators: Vec::new(), discrete: Vec::new(), s_param: None }
    }

    fn dim(&self) -> usize {
        self.structure.dim()
    }

    /// `Theta_a = theta0(xi_a)` as scalar fields.
    pub fn moment_fields(&self) -> Vec<Field> {
        self.generators.iter().map(|x| pairing(&self.structure.theta0, x)).collect()
    }

    pub fn moment_map(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.moment_fields().iter().map(|f| Ok(f.at(p)?[0])).collect()
    }

    pub fn in_s(&self, p: &[f64]) -> Result<bool> {
        Ok(self.moment_map(p)?.iter().all(|t| t.abs() <= tolerance::IN_S))
    }

    fn require_s(&self, p: &[f64]) -> Result<()> {
        let th = self.moment_map(p)?;
        if let Some(t) = th.iter().find(|t| t.abs() > tolerance::IN_S) {
            return Err(Error::Domain(format!("point not in the zero set of the moment map (|Theta| = {:e})", t.abs())));
        }
        Ok(())
    }

    /// Samples `S` through the analytic parametrization.
    pub fn sample_s<R: rand::Rng>(&self, rng: &mut R, n: usize) -> Result<Vec<Vec<f64>>> {
        let sp = self.s_param.as_ref().ok_or_else(|| Error::Invalid("action has no parametrization of S".into()))?;
        sp.chart.sample(rng, n)?.iter().map(|q| sp.map.at(q)).collect()
    }

    /// Both tangency characterizations at `p` in `S`.
    pub fn tangent_to_s(&self, p: &[f64], v: &[f64]) -> Result<Tangency> {
        self.require_s(p)?;
        let beta = self.structure.beta();
        let g = self.structure.gamma_field().at(p)?;
        let gv = geometry::eval1(&g, v);
        let (mut contact, mut gradient) = (Vec::new(), Vec::new());
        for (xi, th) in self.generators.iter().zip(self.moment_fields()) {
            let x = xi.at(p)?;
            contact.push(beta.eval(p, &[v, &x])?);
            let tg = th.germ(p, 1)?[0].clone();
            gradient.push(geometry::eval1(&tg.gradient(), v) + gv * tg.value());
        }
        let tol = tolerance::JET_EXACT * linalg::norm(v).max(1.0);
        Ok(Tangency { tangent: contact.iter().all(|c| c.abs() <= tol), contact, gradient })
    }

    pub fn h_decomposition(&self, p: &[f64]) -> Result<HDecomposition> {
        self.require_s(p)?;
        let d = self.dim();
        let seeds = Jet::seed(p, 0);
        let amb = Ambient::at(self, p, &seeds, 0)?;
        let tr = self.structure.reeb().germ(p, 0)?;
        let mut cols = [vec![0.0; d * d], vec![0.0; d * d], vec![0.0; d * d]];
        for j in 0..d {
            let mut e = vec![seeds[0].zero_like(); d];
            e[j] = seeds[0].lift_const(1.0);
            let h = project_along(&amb.theta, &tr, &e);
            let split = amb.split(&h)?;
            for (c, part) in cols.iter_mut().zip([&split.t, &split.it, &split.e]) {
                for (i, x) in values(part).into_iter().enumerate() {
                    c[i * d + j] = x;
                }
            }
        }
        let [proj_t, proj_it, proj_e] = cols;
        Ok(HDecomposition { dim: d, proj_t, proj_it, proj_e })
    }

    /// Checks that the action is by CR-Weyl automorphisms on `points`.
    pub fn validate(&self, points: &[Vec<f64>], tol_scale: f64) -> ValidationReport {
        match self.validate_inner(points, tol_scale) {
            Ok(checks) => ValidationReport { checks },
            Err(e) => ValidationReport { checks: vec![Check::failed("action", &e.to_string())] },
        }
    }

    fn validate_inner(&self, points: &[Vec<f64>], s: f64) -> Result<Vec<Check>> {
        let st = &self.structure;
        let d = self.dim();
        let th = st.theta0.clone();
        let f = st.faraday()?;
        let (mut h_pres, mut i_comm, mut horiz, mut inv, mut moment_inv) =
            (Max::default(), Max::default(), Max::default(), Max::default(), Max::default());
        let (mut inverse, mut d_h, mut d_i, mut d_gamma) = (Max::default(), Max::default(), Max::default(), Max::default());
        let moments = self.moment_fields();
        for xi in &self.generators {
            let lie = th.lie_derivative(xi)?;
            let gxi = pairing(&st.gamma, xi);
            let ixf = f.interior(xi)?;
            for p in points {
                let l = lie.field().expect("components").at(p)?;
                let t = th.field().expect("components").at(p)?;
                for i in 0..d {
                    for j in 0..d {
                        h_pres.push((l[i] * t[j] - l[j] * t[i]).abs());
                    }
                }
                let c = gxi.at(p)?[0];
                let hz: Vec<f64> = l.iter().zip(&t).map(|(a, b)| a + c * b).collect();
                horiz.push(linalg::max_abs(&hz));
                inv.push(linalg::max_abs(&ixf.field().expect("components").at(p)?));
                for v in st.h_frame(p)? {
                    let x = st.h_extension(&v);
                    let lhs = geometry::lie_bracket(xi, &st.apply_i(&x), p)?;
                    let br = geometry::lie_bracket(xi, &x, p)?;
                    let rhs = st.endo.apply(p, &br)?;
                    i_comm.push(linalg::norm(&linalg::sub(&lhs, &rhs)));
                }
                for m in &moments {
                    let tg = m.germ(p, 1)?[0].clone();
                    let xv = xi.at(p)?;
                    moment_inv.push((geometry::eval1(&tg.gradient(), &xv) + c * tg.value()).abs());
                }
            }
        }
        for g in &self.discrete {
            let back = compose_field(g.forward.clone(), g.inverse.clone());
            let pb = th.pullback(&g.forward)?;
            let pbg = st.gamma.pullback(&g.forward)?;
            let ratio = ratio_field(pb.field().expect("components").clone(), st.theta_field().clone());
            for p in points {
                inverse.push(linalg::norm(&linalg::sub(&back.at(p)?, p)));
                let a = pb.field().expect("components").at(p)?;
                let t = st.theta_field().at(p)?;
                let fr = ratio.germ(p, 1)?[0].clone();
                let resid: Vec<f64> = a.iter().zip(&t).map(|(x, y)| x - fr.value() * y).collect();
                d_h.push(linalg::max_abs(&resid));
                if fr.value() <= 0.0 {
                    return Err(Error::Invalid(format!("{} reverses the co-orientation", g.name)));
                }
                let dlog = linalg::scale(1.0 / fr.value(), &fr.gradient());
                let gp = pbg.field().expect("components").at(p)?;
                let g0 = st.gamma_field().at(p)?;
                let law: Vec<f64> = (0..d).map(|i| gp[i] - g0[i] + dlog[i]).collect();
                d_gamma.push(linalg::max_abs(&law));
                let fg = g.forward.germ(p, 1)?;
                let q = values(&fg);
                let jac: Vec<f64> = (0..d).flat_map(|i| fg[i].gradient()).collect();
                let a_p = st.endo.0.at(p)?;
                let a_q = st.endo.0.at(&q)?;
                for v in st.h_frame(p)? {
                    let lhs = HDecomposition::apply(&jac, &HDecomposition::apply(&a_p, &v));
                    let rhs = HDecomposition::apply(&a_q, &HDecomposition::apply(&jac, &v));
                    d_i.push(linalg::norm(&linalg::sub(&lhs, &rhs)));
                }
            }
        }
        let e = tolerance::JET_EXACT * s;
        let mut checks = Vec::new();
        if !self.generators.is_empty() {
            checks.extend([
                Check::at_most("generators-preserve-h", h_pres.0, e),
                Check::at_most("generators-commute-with-i", i_comm.0, e),
                Check::at_most("generators-horizontal", horiz.0, e),
                Check::at_most("generators-preserve-curvature", inv.0, e),
                Check::at_most("moment-map-invariant", moment_inv.0, e),
            ]);
        }
        if !self.discrete.is_empty() {
            checks.extend([
                Check::at_most("discrete-inverse", inverse.0, e),
                Check::at_most("discrete-preserve-h", d_h.0, e),
                Check::at_most("discrete-commute-with-i", d_i.0, e),
                Check::at_most("discrete-gamma-law", d_gamma.0, e),
            ]);
        }
        Ok(checks)
    }

    /// Factors `g^* theta0 = rho theta0`, checked for constancy on `points`.
    pub fn rho(&self, points: &[Vec<f64>]) -> Result<RhoHomomorphism> {
        let th = &self.structure.theta0;
        let factor = |map: &Field| -> Result<(f64, f64, f64)> {
            let pb = th.pullback(map)?;
            let (mut lo, mut hi, mut prop) = (f64::INFINITY, f64::NEG_INFINITY, Max::default());
            for p in points {
                let a = pb.field().expect("components").at(p)?;
                let t = self.structure.theta_field().at(p)?;
                let f = linalg::dot(&a, &t) / linalg::dot(&t, &t);
                prop.push(linalg::norm(&linalg::axpy(-f, &t, &a)) / linalg::norm(&t));
                lo = lo.min(f);
                hi = hi.max(f);
            }
            let mid = 0.5 * (lo + hi);
            Ok((mid, (hi - lo) / mid.abs(), prop.0))
        };
        let mut out = RhoHomomorphism { factors: Vec::new(), spread: 0.0, proportionality: 0.0, word_residual: 0.0 };
        for g in &self.discrete {
            let (f, spread, prop) = factor(&g.forward)?;
            out.factors.push(f);
            out.spread = out.spread.max(spread);
            out.proportionality = out.proportionality.max(prop);
        }
        if out.spread > tolerance::JET_EXACT || out.proportionality > tolerance::JET_EXACT {
            return Err(Error::Invalid(format!(
                "pullback factor is not a constant multiple (spread {:e}, proportionality {:e})",
                out.spread, out.proportionality
            )));
        }
        for (i, g) in self.discrete.iter().enumerate() {
            let (fi, ..) = factor(&compose_field(g.forward.clone(), g.inverse.clone()))?;
            out.word_residual = out.word_residual.max((fi - 1.0).abs());
            for (j, h) in self.discrete.iter().enumerate() {
                let (fij, ..) = factor(&compose_field(g.forward.clone(), h.forward.clone()))?;
                let prod = out.factors[i] * out.factors[j];
                out.word_residual = out.word_residual.max((fij - prod).abs() / prod);
            }
        }
        Ok(out)
    }

    /// `(1/2 sigma Theta_a)` at a cone point.
    pub fn cone_moment_map(&self, p: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        Ok(self.moment_map(&p[..d])?.into_iter().map(|t| 0.5 * p[d] * t).collect())
    }

    /// Max over points and coordinate directions `X` of
    /// `|Omega(X, xi~) - 1/2 (X(sigma Theta) + 2 sigma Theta gamma(X))|`.
    pub fn cone_moment_residual(&self, cone_points: &[Vec<f64>]) -> Result<f64> {
        let d = self.dim();
        let cone = ConeSpace::new(self.structure.clone());
        let omega = cone.cone_two_form();
        let mut m = Max::default();
        for (xi, th) in self.generators.iter().zip(self.moment_fields()) {
            let lifted = cone.lift_field(xi);
            for p in cone_points {
                let q = &p[..d];
                let t = p[d];
                let xl = lifted.at(p)?;
                let tg = th.germ(q, 1)?[0].clone();
                let g = self.structure.gamma_field().at(q)?;
                for i in 0..=d {
                    let mut x = vec![0.0; d + 1];
                    x[i] = 1.0;
                    let lhs = omega.eval(p, &[&x, &xl])?;
                    let dx = if i < d { t * tg.gradient()[i] } else { tg.value() };
                    let gx = if i < d { g[i] } else { 0.0 };
                    m.push((lhs - 0.5 * (dx + 2.0 * t * tg.value() * gx)).abs());
                }
            }
        }
        Ok(m.0)
    }

    /// Checks that `slice` lands in `S`, is transverse to the orbits and
    /// intertwines its discrete maps with the ambient ones.
    pub fn validate_slice(&self, slice: &SliceChart, points: &[Vec<f64>]) -> ValidationReport {
        let run = || -> Result<Vec<Check>> {
            let (mut on_s, mut trans, mut equiv) = (Max::default(), f64::INFINITY, Max::default());
            for p in points {
                let k = slice.embedding.germ(p, 1)?;
                let q = values(&k);
                for t in self.moment_map(&q)? {
                    on_s.push(t.abs());
                }
                let seeds = Jet::seed(p, 0);
                let amb = Ambient::at(self, &q, &seeds_on(&q, &seeds), 0)?;
                let m = slice.dim();
                let mut cols: Vec<Vec<f64>> = (0..m).map(|j| k.iter().map(|c| c.gradient()[j]).collect()).collect();
                cols.extend(amb.xis.iter().map(|x| values(x)));
                let rows = (0..cols.len())
                    .map(|a| (0..cols.len()).map(|b| linalg::dot(&cols[a], &cols[b])).collect())
                    .collect::<Vec<_>>();
                trans = trans.min(linalg::min_singular_value(&rows));
                for (gh, g) in slice.discrete.iter().zip(&self.discrete) {
                    let a = slice.embedding.at(&gh.forward.at(p)?)?;
                    let b = g.forward.at(&q)?;
                    equiv.push(linalg::norm(&linalg::sub(&a, &b)));
                }
            }
            let mut checks = vec![
                Check::at_most("slice-in-zero-set", on_s.0, tolerance::IN_S),
                Check::at_least("slice-transverse", trans, tolerance::SINGULAR),
            ];
            if !slice.discrete.is_empty() {
                checks.push(Check::at_most("slice-equivariant", equiv.0, tolerance::JET_EXACT));
            }
            Ok(checks)
        };
        match run() {
            Ok(checks) => ValidationReport { checks },
            Err(e) => ValidationReport { checks: vec![Check::failed("slice", &e.to_string())] },
        }
    }

    /// The reduced structure on the slice chart.
    pub fn reduce(&self, slice: &SliceChart) -> Result<Reduction> {
        self.reduce_with_gamma_shift(slice, None)
    }

    /// As [`reduce`](Self::reduce), with `gamma^ = iota^* gamma + dh` when `h`
    /// is given. Only the negative controls use the shift.
    pub fn reduce_with_gamma_shift(&self, slice: &SliceChart, h: Option<Field>) -> Result<Reduction> {
        if slice.embedding.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: slice.embedding.len() });
        }
        let m = slice.dim();
        let (lo, hi) = slice.chart.bounds();
        let probes: Vec<Vec<f64>> = [0.5, 0.3, 0.7]
            .iter()
            .map(|f| lo.iter().zip(hi).map(|(a, b)| a + f * (b - a)).collect::<Vec<f64>>())
            .filter(|p| slice.chart.contains(p))
            .collect();
        if let Some(c) = self.validate_slice(slice, &probes).checks.iter().find(|c| !c.pass && c.name.starts_with("slice-transverse")) {
            return Err(Error::Singular(format!("slice is not transverse to the orbits (min singular value {:e})", c.max_residual)));
        }
        let theta = self.structure.theta0.pullback(&slice.embedding)?;
        let mut gamma = self.structure.gamma.pullback(&slice.embedding)?;
        if let Some(h) = h {
            gamma = gamma.add(&KForm::scalar(h).d()?)?;
        }
        let provisional =
            CRWeylStructure::new(slice.chart.clone(), theta.clone(), gamma.clone(), EndomorphismField(geometry::const_field(m, vec![0.0; m * m])))?;
        let reeb = provisional.reeb().0;
        let action = self.clone();
        let emb = slice.embedding.clone();
        let th_hat = theta.field().expect("components").clone();
        let endo = fn_field(m, m * m, move |p, k| {
            let inner = emb.germ(p, raise(k)?)?;
            let jac: Vec<Vec<Jet>> = inner.iter().map(|c| (0..m).map(|j| c.partial(j)).collect()).collect();
            let inner: Vec<Jet> = inner.iter().map(|c| c.truncate(k)).collect();
            let amb = Ambient::at(&action, &values(&inner), &inner, k)?;
            let th = th_hat.germ(p, k)?;
            let tr = reeb.germ(p, k)?;
            let zero = th[0].zero_like();
            let mut out = vec![zero.clone(); m * m];
            for j in 0..m {
                let mut e = vec![zero.clone(); m];
                e[j] = zero.lift_const(1.0);
                let vh = project_along(&th, &tr, &e);
                let v: Vec<Jet> = (0..amb.d).map(|i| jet_dot(&jac[i], &vh)).collect();
                let w = apply_matrix(&amb.endo, &amb.split(&v)?.e);
                let col = push_down_germ(&jac, &amb.xis, &w)?;
                for i in 0..m {
                    out[i * m + j] = col[i].clone();
                }
            }
            Ok(out)
        });
        let structure = CRWeylStructure::new(slice.chart.clone(), theta, gamma, EndomorphismField::new(endo))?;
        Ok(Reduction { action: self.clone(), slice: slice.clone(), structure })
    }
}

fn seeds_on(q: &[f64], like: &[Jet]) -> Vec<Jet> {
    let z = like[0].zero_like();
    q.iter().map(|&x| z.lift_const(x)).collect()
}

fn jet_dot(a: &[Jet], b: &[Jet]) -> Jet {
    crate::jet::dot(a, b)
}

/// `(a . b) / (b . b)` for two component fields.
fn ratio_field(a: Field, b: Field) -> Field {
    fn_field(a.nvars(), 1, move |p, k| {
        let x = a.germ(p, k)?;
        let y = b.germ(p, k)?;
        Ok(vec![jet_dot(&x, &y).div(&jet_dot(&y, &y))?])
    })
}

/// Solves `w = jac * x + sum c_a xi_a` in the least-squares sense and
/// returns `x`; errors when the slice is not transverse to the orbits.
fn push_down_germ(jac: &[Vec<Jet>], xis: &[Vec<Jet>], w: &[Jet]) -> Result<Vec<Jet>> {
    let d = jac.len();
    let m = jac.first().map_or(0, Vec::len);
    let cols: Vec<Vec<Jet>> =
        (0..m).map(|j| (0..d).map(|i| jac[i][j].clone()).collect()).chain(xis.iter().cloned()).collect();
    let normal: Vec<Vec<Jet>> = cols.iter().map(|a| cols.iter().map(|b| jet_dot(a, b)).collect()).collect();
    let nv: Vec<Vec<f64>> = normal.iter().map(|r| values(r)).collect();
    if linalg::min_singular_value(&nv) < tolerance::SINGULAR {
        return Err(Error::Singular("slice is not transverse to the orbits".into()));
    }
    let rhs: Vec<Jet> = cols.iter().map(|a| jet_dot(a, w)).collect();
    let x = solve_jets(normal, rhs, tolerance::PIVOT)?;
    let fit: Vec<Jet> = (0..d)
        .map(|i| cols.iter().zip(&x).fold(w[i].zero_like(), |acc, (c, xa)| &acc + &(&c[i] * xa)))
        .collect();
    let miss = linalg::norm(&values(&geometry::sub_germs(w, &fit)));
    if miss > tolerance::JET_CHAIN * linalg::norm(&values(w)).max(1.0) {
        return Err(Error::Singular(format!("vector is not tangent to the slice plus orbits (miss {miss:e})")));
    }
    Ok(x[..m].to_vec())
}

/// Ambient data at a point, as germs in whatever variables `inner` uses.
struct Ambient {
    d: usize,
    theta: Vec<Jet>,
    dtheta: Vec<Jet>,
    endo: Vec<Jet>,
    xis: Vec<Vec<Jet>>,
}

struct Split {
    t: Vec<Jet>,
    it: Vec<Jet>,
    e: Vec<Jet>,
}

impl Ambient {
    /// Germs at `q` of order `k`, composed with `inner` (whose values are `q`).
    fn at(a: &GroupActionSpec, q: &[f64], inner: &[Jet], k: usize) -> Result<Ambient> {
        let d = a.dim();
        let st = &a.structure;
        let up = |g: Vec<Jet>| -> Vec<Jet> { g.iter().map(|c| c.compose(inner)).collect() };
        let th1 = st.theta_field().germ(q, raise(k)?)?;
        let dth: Vec<Jet> = d1_germ(&th1).iter().map(|c| c.truncate(k)).collect();
        let th: Vec<Jet> = th1.iter().map(|c| c.truncate(k)).collect();
        Ok(Ambient {
            d,
            theta: up(th),
            dtheta: up(dth),
            endo: up(st.endo.0.germ(q, k)?),
            xis: a.generators.iter().map(|x| Ok(up(x.germ(q, k)?))).collect::<Result<_>>()?,
        })
    }

    fn g0(&self, u: &[Jet], v: &[Jet]) -> Jet {
        contract2(&self.dtheta, u, &apply_matrix(&self.endo, v)).scale(0.5)
    }

    /// `g0`-orthogonal split of `h` in `H` into `T`, `I T` and `E` parts.
    fn split(&self, h: &[Jet]) -> Result<Split> {
        let k = self.xis.len();
        let zero = h[0].zero_like();
        if k == 0 {
            let z = vec![zero; h.len()];
            return Ok(Split { t: z.clone(), it: z, e: h.to_vec() });
        }
        let mut w: Vec<Vec<Jet>> = self.xis.clone();
        w.extend(self.xis.iter().map(|x| apply_matrix(&self.endo, x)));
        let gram: Vec<Vec<Jet>> = w.iter().map(|a| w.iter().map(|b| self.g0(a, b)).collect()).collect();
        let gv: Vec<Vec<f64>> = gram.iter().map(|r| values(r)).collect();
        if linalg::min_singular_value(&gv) < tolerance::SINGULAR {
            return Err(Error::Singular("orbit directions degenerate".into()));
        }
        let rhs: Vec<Jet> = w.iter().map(|a| self.g0(a, h)).collect();
        let c = solve_jets(gram, rhs, tolerance::PIVOT)?;
        let comb = |range: std::ops::Range<usize>| -> Vec<Jet> {
            (0..h.len())
                .map(|i| range.clone().fold(zero.clone(), |acc, a| &acc + &(&c[a] * &w[a][i])))
                .collect()
        };
        let t = comb(0..k);
        let it = comb(k..2 * k);
        let e = geometry::sub_germs(&geometry::sub_germs(h, &t), &it);
        Ok(Split { t, it, e })
    }
}

/// A reduced structure together with the data that produced it.
#[derive(Clone)]
pub struct Reduction {
    pub action: GroupActionSpec,
    pub slice: SliceChart,
    pub structure: CRWeylStructure,
}

impl Reduction {
    fn along(&self, p: &[f64]) -> Result<(Vec<f64>, Vec<Vec<Jet>>, Ambient)> {
        let m = self.slice.dim();
        let k = self.slice.embedding.germ(p, 1)?;
        let jac: Vec<Vec<Jet>> = k.iter().map(|c| (0..m).map(|j| Jet::constant(m, 0, c.gradient()[j])).collect()).collect();
        let q = values(&k);
        let seeds: Vec<Jet> = q.iter().map(|&x| Jet::constant(m, 0, x)).collect();
        let amb = Ambient::at(&self.action, &q, &seeds, 0)?;
        Ok((q, jac, amb))
    }

    /// Pushes a vector tangent to `S` at `iota(p)` down to the reduced chart.
    pub fn push_down(&self, p: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let (_, jac, amb) = self.along(p)?;
        let z = Jet::constant(self.slice.dim(), 0, 0.0);
        Ok(values(&push_down_germ(&jac, &amb.xis, &geometry::lift(&z, w))?))
    }

    pub fn lift(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (_, jac, _) = self.along(p)?;
        Ok(jac.iter().map(|r| r.iter().zip(v).map(|(a, b)| a.value() * b).sum()).collect())
    }

    /// Max `|push_down(T0) - T0^|` over reduced points.
    pub fn reeb_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut m = Max::default();
        for p in points {
            let q = self.slice.embedding.at(p)?;
            let t = self.action.structure.reeb_field(&q)?;
            let down = self.push_down(p, &t)?;
            let th = self.structure.reeb_field(p)?;
            m.push(linalg::norm(&linalg::sub(&down, &th)));
        }
        Ok(m.0)
    }

    /// `I^` computed from two lifts differing by orbit directions.
    pub fn lift_independence(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut m = Max::default();
        let st = &self.action.structure;
        for p in points {
            let (q, _, amb) = self.along(p)?;
            let tr = self.structure.reeb_field(p)?;
            let th = self.structure.theta_field().at(p)?;
            for j in 0..self.slice.dim() {
                let mut e = vec![0.0; self.slice.dim()];
                e[j] = 1.0;
                let vh = linalg::axpy(-th[j], &tr, &e);
                let mut v = self.lift(p, &vh)?;
                let expected = self.structure.endo.apply(p, &vh)?;
                for (a, xi) in amb.xis.iter().enumerate() {
                    v = linalg::axpy(0.7 + a as f64, &values(xi), &v);
                }
                let z = Jet::constant(self.slice.dim(), 0, 0.0);
                let split = amb.split(&geometry::lift(&z, &v))?;
                let w = st.endo.apply(&q, &values(&split.e))?;
                m.push(linalg::norm(&linalg::sub(&self.push_down(p, &w)?, &expected)));
            }
        }
        Ok(m.0)
    }

    /// Max discrepancies between the reduced cone and the reduction of the
    /// ambient cone, for `J` (relative to `|v|`) and for the metric.
    pub fn cone_commutativity(&self, cone_points: &[Vec<f64>]) -> Result<(f64, f64)> {
        let m = self.slice.dim();
        let amb_cone = ConeSpace::new(self.action.structure.clone());
        let red_cone = ConeSpace::new(self.structure.clone());
        let st = &self.action.structure;
        let (mut dj, mut dg) = (Max::default(), Max::default());
        for p in cone_points {
            let ph = &p[..m];
            let t = p[m];
            let (q, _, amb) = self.along(ph)?;
            let mut qc = q.clone();
            qc.push(t);
            let tr = st.reeb_field(&q)?;
            let g = st.gamma_field().at(&q)?;
            let th = st.theta_field().at(&q)?;
            let z = Jet::constant(self.slice.dim(), 0, 0.0);
            // the ambient cone vector over a reduced one, minus its T-part
            let reduce_vec = |v: &[f64]| -> Result<Vec<f64>> {
                let vm = self.lift(ph, &v[..m])?;
                let a = geometry::eval1(&th, &vm);
                let h = linalg::axpy(-a, &tr, &vm);
                let split = amb.split(&geometry::lift(&z, &h))?;
                let ht = values(&split.t);
                let mut out = linalg::sub(&vm, &ht);
                out.push(v[m] + t * geometry::eval1(&g, &ht));
                Ok(out)
            };
            let basis: Vec<Vec<f64>> = (0..=m)
                .map(|i| {
                    let mut e = vec![0.0; m + 1];
                    e[i] = 1.0;
                    e
                })
                .collect();
            let mut lifted = Vec::new();
            for v in &basis {
                let u = reduce_vec(v)?;
                let ju = amb_cone.cone_complex_structure(&qc, &u)?;
                let down = self.push_down(ph, &ju[..q.len()])?;
                let mut j1 = down;
                j1.push(ju[q.len()]);
                let j2 = red_cone.cone_complex_structure(p, v)?;
                dj.push(linalg::norm(&linalg::sub(&j1, &j2)) / linalg::norm(v));
                lifted.push(u);
            }
            for i in 0..=m {
                for j in 0..=m {
                    let g1 = amb_cone.cone_metric(&qc, &lifted[i], &lifted[j])?;
                    let g2 = red_cone.cone_metric(p, &basis[i], &basis[j])?;
                    dg.push((g1 - g2).abs());
                }
            }
        }
        Ok((dj.0, dg.0))
    }
}

/// A path in a chart, parametrized by `s` in `[0, 1]`, closed in the
/// quotient by `closing` (`c(1) = closing(c(0))`) or closed outright.
#[derive(Clone)]
pub struct Loop {
    pub path: Field,
    pub closing: Option<Field>,
}

#[derive(Debug, Clone, Copy)]
pub struct Holonomy {
    pub value: f64,
    /// Max `|d gamma|` sampled along the path.
    pub curvature: f64,
}

/// `integral of gamma` along `lp`, by adaptive Simpson quadrature.
pub fn exactness_check(s: &CRWeylStructure, lp: &Loop) -> Result<Holonomy> {
    let start = lp.path.at(&[0.0])?;
    let end = lp.path.at(&[1.0])?;
    let target = match &lp.closing {
        Some(g) => g.at(&start)?,
        None => start.clone(),
    };
    let gap = linalg::norm(&linalg::sub(&end, &target));
    if gap > tolerance::JET_EXACT {
        return Err(Error::Invalid(format!("path does not close up (gap {gap:e})")));
    }
    let f = s.faraday()?;
    let mut curv = Max::default();
    for i in 0..=64 {
        let c = lp.path.at(&[i as f64 / 64.0])?;
        if let Some(why) = s.chart.violated(&c) {
            return Err(Error::Domain(format!("loop leaves the chart ({why})")));
        }
        curv.push(linalg::max_abs(&f.field().expect("components").at(&c)?));
    }
    if curv.0 > tolerance::JET_EXACT {
        return Err(Error::Invalid(format!("gamma is not closed along the loop (|d gamma| = {:e})", curv.0)));
    }
    let gamma = s.gamma_field().clone();
    let path = lp.path.clone();
    let integrand = |x: f64| -> Result<f64> {
        let c = path.germ(&[x], 1)?;
        let q = values(&c);
        let vel: Vec<f64> = c.iter().map(|g| g.gradient()[0]).collect();
        Ok(geometry::eval1(&gamma.at(&q)?, &vel))
    };
    let value = adaptive_simpson(&integrand, 0.0, 1.0, 1e-13, 48)?;
    Ok(Holonomy { value, curvature: curv.0 })
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    fn rec(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm)?, f(rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)? + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    let (fa, fm, fb) = (f(a)?, f(0.5 * (a + b))?, f(b)?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn moment_map_values() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        assert!(a.moment_map(&[1.0, 0.0, 1.0, 0.0, 0.7]).unwrap()[0].abs() < 1e-15);
        assert!((a.moment_map(&[1.0, 0.0, 0.0, 0.0, 0.7]).unwrap()[0] - 1.0).abs() < 1e-15);
        let xi = a.generators[0].at(&[1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(xi, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        let cm = a.cone_moment_map(&[1.0, 0.0, 0.0, 0.0, 0.7, 2.0]).unwrap();
        assert!((cm[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn action_validates() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        let pts = a.structure.chart.sample(&mut rng(), 10).unwrap();
        let r = a.validate(&pts, 1.0);
        assert!(r.pass(), "{:?}", r.checks);
        let (a3, _) = catalog::example3_action(2, 2.0).unwrap();
        let pts = a3.structure.chart.sample(&mut rng(), 5).unwrap();
        let r = a3.validate(&pts, 1.0);
        assert!(r.pass(), "{:?}", r.checks);
    }

    #[test]
    fn decomposition_ranks() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        for p in a.sample_s(&mut rng(), 10).unwrap() {
            let h = a.h_decomposition(&p).unwrap();
            let d = h.dim;
            assert!((HDecomposition::rank(&h.proj_t, d) - 1.0).abs() < 1e-9);
            assert!((HDecomposition::rank(&h.proj_it, d) - 1.0).abs() < 1e-9);
            assert!((HDecomposition::rank(&h.proj_e, d) - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn example2_reduction() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        let slice = catalog::example2_slice(2.0).unwrap();
        let pts = slice.chart.sample(&mut rng(), 10).unwrap();
        let sv = a.validate_slice(&slice, &pts);
        assert!(sv.pass(), "{:?}", sv.checks);
        let red = a.reduce(&slice).unwrap();
        let v = red.structure.validate(&pts, 1.0);
        assert!(v.pass(), "{:?}", v.checks);
        let mut defect = 0.0f64;
        for p in &pts {
            for h in red.structure.h_frame(p).unwrap() {
                defect = defect.max(linalg::norm(&red.structure.sasaki_weyl_defect(p, &h).unwrap()));
            }
        }
        eprintln!("defect {defect:e}");
        assert!(defect < 1e-8);
        let rr = red.reeb_residual(&pts).unwrap();
        eprintln!("reeb {rr:e}");
        assert!(rr < 1e-8);
        let li = red.lift_independence(&pts).unwrap();
        assert!(li < 1e-9, "{li}");
        let cone_pts: Vec<Vec<f64>> = pts.iter().map(|p| [p.as_slice(), &[1.3]].concat()).collect();
        let (dj, dg) = red.cone_commutativity(&cone_pts).unwrap();
        eprintln!("commutativity {dj:e} {dg:e}");
        assert!(dj < 1e-8 && dg < 1e-8);
    }

    #[test]
    fn rho_and_holonomy() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        let pts = a.structure.chart.sample(&mut rng(), 20).unwrap();
        let rho = a.rho(&pts).unwrap();
        assert!((rho.factors[0] - 4.0).abs() < 1e-9, "{rho:?}");
        let ga = catalog::invariant_gauge(&a).unwrap();
        let slice = catalog::example2_slice(2.0).unwrap();
        let red = ga.reduce(&slice).unwrap();
        let lp = catalog::quotient_loop(&slice, &[0.3, -1.0, -0.8]).unwrap();
        let h = exactness_check(&red.structure, &lp).unwrap();
        eprintln!("holonomy {}", h.value);
        assert!((h.value - 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn trivial_reduction_is_the_identity() {
        let st = catalog::example2_structure(2).unwrap();
        let a = GroupActionSpec::trivial(st.clone());
        let red = a.reduce(&SliceChart::identity(&st)).unwrap();
        let mut gap = 0.0f64;
        for p in st.chart.sample(&mut rng(), 10).unwrap() {
            let pairs = [
                (st.theta_field().at(&p).unwrap(), red.structure.theta_field().at(&p).unwrap()),
                (st.gamma_field().at(&p).unwrap(), red.structure.gamma_field().at(&p).unwrap()),
                (st.reeb_field(&p).unwrap(), red.structure.reeb_field(&p).unwrap()),
            ];
            for (x, y) in &pairs {
                gap = gap.max(linalg::norm(&linalg::sub(x, y)));
            }
            for v in st.h_frame(&p).unwrap() {
                let (x, y) = (st.endo.apply(&p, &v).unwrap(), red.structure.endo.apply(&p, &v).unwrap());
                gap = gap.max(linalg::norm(&linalg::sub(&x, &y)));
            }
        }
        assert!(gap <= 1e-12, "{gap:e}");
    }

    #[test]
    fn non_transverse_slice_is_rejected() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        let err = a.reduce(&catalog::example2_perturbed_slice(2.0).unwrap()).err().unwrap();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }

    #[test]
    fn shifted_reduced_gamma_moves_the_reeb_field() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        let slice = catalog::example2_slice(2.0).unwrap();
        let h = geometry::parse_field(&catalog::reduced_coords(), &["0.5 * u1 * sin(phi)"]).unwrap();
        let red = a.reduce_with_gamma_shift(&slice, Some(h)).unwrap();
        let pts = slice.chart.sample(&mut rng(), 10).unwrap();
        assert!(red.reeb_residual(&pts).unwrap() > 1e-3);
    }

    #[test]
    fn tangency_of_special_directions() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        let d = a.dim();
        for p in a.sample_s(&mut rng(), 20).unwrap() {
            let xi = a.generators[0].at(&p).unwrap();
            assert!(a.tangent_to_s(&p, &xi).unwrap().tangent);
            assert!(a.tangent_to_s(&p, &a.structure.reeb_field(&p).unwrap()).unwrap().tangent);
            let mut radial = vec![0.0; d];
            radial[0] = p[0];
            let tg = a.tangent_to_s(&p, &radial).unwrap();
            assert_eq!(tg.tangent, p[0].abs() < 1e-6);
            assert!(tg.disagreement() < 1e-12);
        }
        let off = [1.0, 0.0, 0.0, 0.0, 1.0];
        assert!(a.tangent_to_s(&off, &[0.0; 5]).is_err());
    }

    #[test]
    fn e_is_i_invariant_and_gauge_independent() {
        let a = catalog::example2_action(2, &[1, -1], 2.0).unwrap();
        let coords = a.structure.chart.coords().to_vec();
        let u = geometry::parse_field(&coords, &["0.3 * sin(x1) + 0.2 * t * y2"]).unwrap();
        let g = GroupActionSpec { structure: a.structure.gauge_transform(&u).unwrap(), ..a.clone() };
        let mut gap = 0.0f64;
        for p in a.sample_s(&mut rng(), 10).unwrap() {
            let (h, hg) = (a.h_decomposition(&p).unwrap(), g.h_decomposition(&p).unwrap());
            for v in a.structure.h_frame(&p).unwrap() {
                let iv = a.structure.endo.apply(&p, &v).unwrap();
                let e = HDecomposition::apply(&h.proj_e, &v);
                let ie = a.structure.endo.apply(&p, &e).unwrap();
                gap = gap.max(linalg::norm(&linalg::sub(&HDecomposition::apply(&h.proj_e, &iv), &ie)));
                for (m, mg) in [(&h.proj_t, &hg.proj_t), (&h.proj_it, &hg.proj_it), (&h.proj_e, &hg.proj_e)] {
                    let (x, y) = (HDecomposition::apply(m, &v), HDecomposition::apply(mg, &v));
                    gap = gap.max(linalg::norm(&linalg::sub(&x, &y)));
                }
            }
        }
        assert!(gap <= 1e-9, "{gap:e}");
    }

    #[test]
    fn contractible_loop_has_no_holonomy() {
        let a = catalog::invariant_gauge(&catalog::example2_action(2, &[1, -1], 2.0).unwrap()).unwrap();
        let red = a.reduce(&catalog::example2_slice(2.0).unwrap()).unwrap();
        let path = geometry::parse_field(&["s"], &["0.4 * cos(6.283185307179586 * s)", "-0.5 + 0.3 * sin(6.283185307179586 * s)", "0.2 * sin(12.566370614359172 * s)"]).unwrap();
        let h = exactness_check(&red.structure, &Loop { path, closing: None }).unwrap();
        assert!(h.value.abs() < 1e-9 && h.curvature < 1e-9, "{h:?}");
    }

    #[test]
    fn example3_holonomy_is_log_rho() {
        let (a, slice) = catalog::example3_action(2, 2.0).unwrap();
        let pts = a.structure.chart.sample(&mut rng(), 10).unwrap();
        let rho = a.rho(&pts).unwrap();
        assert!((rho.factors[0] - 4.0).abs() < 1e-9, "{rho:?}");
        let g = catalog::invariant_gauge(&a).unwrap();
        let red = g.reduce(&slice).unwrap();
        let start = [0.1, -0.1, 0.2, 0.8, 0.5];
        let h = exactness_check(&red.structure, &catalog::quotient_loop(&slice, &start).unwrap()).unwrap();
        assert!((h.value - 4f64.ln()).abs() < 1e-8, "{h:?}");
    }
}
