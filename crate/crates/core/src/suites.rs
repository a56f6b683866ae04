//! Named verification suites and their reports.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{self, Example};
use crate::cone::ConeSpace;
use crate::error::{Error, Result};
use crate::geometry::{self, lie_bracket, parse_field, KForm, VectorField};
use crate::linalg;
use crate::reduction::{exactness_check, HDecomposition, Loop, Reduction, SliceChart};
use crate::report::{Check, Max};
use crate::tolerance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Calculus,
    Cr,
    SasakiWeyl,
    Cone,
    Lck,
    Reduction,
    Exactness,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Calculus, Suite::Cr, Suite::SasakiWeyl, Suite::Cone, Suite::Lck, Suite::Reduction, Suite::Exactness];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Calculus => "calculus",
            Suite::Cr => "cr",
            Suite::SasakiWeyl => "sasaki-weyl",
            Suite::Cone => "cone",
            Suite::Lck => "lck",
            Suite::Reduction => "reduction",
            Suite::Exactness => "exactness",
        }
    }

    pub fn from_name(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { samples: 100, seed: 42, tol_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub example: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub samples: usize,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub seconds: f64,
}

/// Suites an example has the data for.
pub fn applicable(ex: &Example) -> Vec<Suite> {
    let mut v = vec![Suite::Calculus, Suite::Cr, Suite::SasakiWeyl, Suite::Cone, Suite::Lck];
    if ex.action.is_some() && ex.slice.is_some() {
        v.push(Suite::Reduction);
        if ex.action.as_ref().is_some_and(|a| !a.discrete.is_empty()) {
            v.push(Suite::Exactness);
        }
    }
    v
}

pub fn run_suite(ex: &Example, suite: Suite, opts: &RunOptions) -> SuiteReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let checks = match run_checks(ex, suite, opts, &mut rng) {
        Ok(c) if !c.is_empty() => c,
        Ok(_) => vec![Check::failed(suite.name(), "no checks ran")],
        Err(e) => vec![Check::failed(suite.name(), &e.to_string())],
    };
    let pass = checks.iter().all(|c| c.pass);
    SuiteReport {
        suite: suite.name().into(),
        example: ex.name.clone(),
        params: ex.params.clone(),
        seed: opts.seed,
        samples: opts.samples,
        checks,
        pass,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn run_checks(ex: &Example, suite: Suite, o: &RunOptions, rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let st = &ex.structure;
    match suite {
        Suite::Calculus => calculus(ex, &st.chart.sample(rng, o.samples)?, o.tol_scale),
        Suite::Cr => Ok(st.validate(&st.chart.sample(rng, o.samples)?, o.tol_scale).checks),
        Suite::SasakiWeyl => {
            let pts = st.chart.sample(rng, o.samples)?;
            let mut m = Max::default();
            for p in &pts {
                for v in st.h_frame(p)? {
                    m.push(linalg::norm(&st.sasaki_weyl_defect(p, &v)?));
                }
            }
            Ok(vec![Check::at_most("sasaki-weyl-defect", m.0, tolerance::JET_CHAIN * o.tol_scale)])
        }
        Suite::Cone => cone(ex, rng, o),
        Suite::Lck => {
            let c = ex.cone();
            let cert = c.lck_check(&c.chart.sample(rng, o.samples)?, o.tol_scale);
            let mut checks = cert.all_checks();
            // the equivalence is a statement about the canonical cone structure
            if ex.j_sign > 0.0 {
                let agree = if cert.cone_is_lck() == cert.criterion_holds() { 0.0 } else { 1.0 };
                checks.push(Check::at_most("cone-verdict-matches-criterion", agree, 0.0));
            }
            Ok(checks)
        }
        Suite::Reduction => reduction(ex, rng, o),
        Suite::Exactness => exactness(ex, rng, o),
    }
}

fn basis(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect()
}

fn calculus(ex: &Example, pts: &[Vec<f64>], s: f64) -> Result<Vec<Check>> {
    let st = &ex.structure;
    let d = st.dim();
    let e = basis(d);
    let dd_theta = st.theta0.d()?.d()?;
    let dd_gamma = st.gamma.d()?.d()?;
    let reeb = st.reeb();
    let lie = st.theta0.lie_derivative(&reeb)?;
    let cartan = st.theta0.d()?.interior(&reeb)?.add(&KForm::scalar(crate::crweyl::pairing(&st.theta0, &reeb)).d()?)?;
    let y = st.h_extension(&e[0]);
    let z = st.h_extension(&e[d - 1]);
    let yz = y.bracket(&z)?;
    let zx = z.bracket(&reeb)?;
    let xy = reeb.bracket(&y)?;
    let (mut dd, mut car, mut jac, mut fd) = (Max::default(), Max::default(), Max::default(), Max::default());
    for p in pts {
        for i in 0..d {
            for j in i + 1..d {
                for k in j + 1..d {
                    dd.push(dd_theta.eval(p, &[&e[i], &e[j], &e[k]])?.abs());
                    dd.push(dd_gamma.eval(p, &[&e[i], &e[j], &e[k]])?.abs());
                }
            }
        }
        for v in &e {
            car.push((lie.eval(p, &[v])? - cartan.eval(p, &[v])?).abs());
        }
        let j1 = lie_bracket(&reeb, &yz, p)?;
        let j2 = lie_bracket(&y, &zx, p)?;
        let j3 = lie_bracket(&z, &xy, p)?;
        jac.push(linalg::norm(&(0..d).map(|i| j1[i] + j2[i] + j3[i]).collect::<Vec<_>>()));
        fd.push(fd_residual(st.theta_field(), p)?);
        fd.push(fd_residual(&reeb.0, p)?);
    }
    Ok(vec![
        Check::at_most("d-squared-zero", dd.0, tolerance::JET_EXACT * s),
        Check::at_most("cartan-formula", car.0, tolerance::JET_EXACT * s),
        Check::at_most("jacobi-identity", jac.0, tolerance::JET_EXACT * s),
        Check::at_most("jet-vs-finite-difference", fd.0, tolerance::FINITE_DIFFERENCE * s),
    ])
}

/// Max difference between jet gradients and central differences, relative
/// to the size of the gradient.
pub fn fd_residual(f: &geometry::Field, p: &[f64]) -> Result<f64> {
    let g = f.germ(p, 1)?;
    let h = 1e-5;
    let mut m = 0.0f64;
    for i in 0..p.len() {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[i] += h;
        b[i] -= h;
        let (fa, fb) = (f.at(&a)?, f.at(&b)?);
        for (c, jet) in g.iter().enumerate() {
            let fdv = (fa[c] - fb[c]) / (2.0 * h);
            let jv = jet.gradient()[i];
            m = m.max((fdv - jv).abs() / jv.abs().max(1.0));
        }
    }
    Ok(m)
}

fn cone(ex: &Example, rng: &mut ChaCha8Rng, o: &RunOptions) -> Result<Vec<Check>> {
    let c = ex.cone();
    let pts = c.chart.sample(rng, o.samples)?;
    let mut checks = c.metric_checks(&pts, o.tol_scale)?;
    checks.push(Check::at_most("j-potential", c.jpotential_residual(&pts)?, tolerance::JET_EXACT * o.tol_scale));
    let d = c.d();
    let (mut n, mut closed, mut mixed) = (Max::default(), Max::default(), Max::default());
    for p in &pts {
        let q = &p[..d];
        let frame = c.base.h_frame(q)?;
        let mut fields: Vec<VectorField> = frame.iter().map(|v| c.lift_field(&c.base.h_extension(v))).collect();
        for (i, x) in frame.iter().enumerate() {
            for (j, y) in frame.iter().enumerate().skip(i + 1) {
                let nb = c.nijenhuis(p, &fields[i], &fields[j])?;
                closed.push(linalg::norm(&linalg::sub(&nb, &c.nijenhuis_closed_form(p, x, y)?)));
            }
            let nm = c.nijenhuis(p, &fields[i], &c.reeb_lift())?;
            mixed.push(linalg::norm(&linalg::sub(&nm, &c.nijenhuis_mixed_closed_form(p, x)?)));
        }
        fields.push(c.reeb_lift());
        fields.push(c.d_sigma());
        for i in 0..fields.len() {
            for j in i + 1..fields.len() {
                n.push(linalg::norm(&c.nijenhuis(p, &fields[i], &fields[j])?));
            }
        }
    }
    let t = tolerance::JET_CHAIN * o.tol_scale;
    checks.push(Check::at_most("nijenhuis", n.0, t));
    checks.push(Check::at_most("nijenhuis-closed-form", closed.0, t));
    checks.push(Check::at_most("nijenhuis-mixed-closed-form", mixed.0, t));
    Ok(checks)
}

fn prefixed(prefix: &str, checks: Vec<Check>) -> Vec<Check> {
    checks.into_iter().map(|c| Check { name: format!("{prefix}{}", c.name), ..c }).collect()
}

fn need_reduction(ex: &Example) -> Result<(&crate::reduction::GroupActionSpec, &SliceChart)> {
    match (&ex.action, &ex.slice) {
        (Some(a), Some(s)) => Ok((a, s)),
        _ => Err(Error::Invalid(format!("{} has no action and slice", ex.name))),
    }
}

/// Points of `S`: from the action's parametrization, else the slice image.
fn s_points(ex: &Example, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<Vec<f64>>> {
    let (a, slice) = need_reduction(ex)?;
    if a.s_param.is_some() {
        return a.sample_s(rng, n);
    }
    slice.chart.sample(rng, n)?.iter().map(|p| slice.embedding.at(p)).collect()
}

fn reduction(ex: &Example, rng: &mut ChaCha8Rng, o: &RunOptions) -> Result<Vec<Check>> {
    let (a, slice) = need_reduction(ex)?;
    let s = o.tol_scale;
    let amb_pts = a.structure.chart.sample(rng, o.samples)?;
    let mut checks = prefixed("action-", a.validate(&amb_pts, s).checks);
    let spts = s_points(ex, rng, o.samples)?;
    let mut on_s = Max::default();
    let (mut agree, mut verdict, mut eproj, mut complete) = (Max::default(), 0.0f64, Max::default(), Max::default());
    let mut orbit_tangent = Max::default();
    let d = a.structure.dim();
    for (idx, p) in spts.iter().enumerate() {
        for t in a.moment_map(p)? {
            on_s.push(t.abs());
        }
        // five random directions per point, plus the orbit and Reeb directions
        for _ in 0..5 {
            let v: Vec<f64> = (0..d).map(|_| rand::Rng::gen_range(rng, -1.0..1.0)).collect();
            let tg = a.tangent_to_s(p, &v)?;
            agree.push(tg.disagreement());
            if tg.tangent != tg.gradient_says_tangent(tolerance::JET_EXACT * linalg::norm(&v).max(1.0)) {
                verdict = 1.0;
            }
        }
        let mut special: Vec<Vec<f64>> = a.generators.iter().map(|x| x.at(p)).collect::<Result<_>>()?;
        special.push(a.structure.reeb_field(p)?);
        for v in &special {
            let tg = a.tangent_to_s(p, v)?;
            orbit_tangent.push(tg.contact.iter().fold(0.0f64, |m, c| m.max(c.abs())));
        }
        if idx < o.samples.min(20) {
            let h = a.h_decomposition(p)?;
            let endo = a.structure.endo.0.at(p)?;
            let tr = a.structure.reeb_field(p)?;
            let th = a.structure.theta_field().at(p)?;
            for e in basis(d) {
                let v = linalg::axpy(-geometry::eval1(&th, &e), &tr, &e);
                let pe = HDecomposition::apply(&h.proj_e, &HDecomposition::apply(&endo, &v));
                let ep = HDecomposition::apply(&endo, &HDecomposition::apply(&h.proj_e, &v));
                eproj.push(linalg::norm(&linalg::sub(&pe, &ep)));
                let sum: Vec<f64> = (0..d)
                    .map(|i| {
                        HDecomposition::apply(&h.proj_t, &v)[i]
                            + HDecomposition::apply(&h.proj_it, &v)[i]
                            + HDecomposition::apply(&h.proj_e, &v)[i]
                    })
                    .collect();
                complete.push(linalg::norm(&linalg::sub(&sum, &v)));
            }
        }
    }
    let e = tolerance::JET_EXACT * s;
    checks.extend([
        Check::at_most("zero-set-membership", on_s.0, tolerance::IN_S),
        Check::at_most("tangency-characterizations-agree", agree.0, e),
        Check::at_most("tangency-verdicts-agree", verdict, 0.0),
        Check::at_most("orbits-and-reeb-tangent-to-s", orbit_tangent.0, e),
        Check::at_most("e-is-i-invariant", eproj.0, e),
        Check::at_most("decomposition-complete", complete.0, e),
    ]);
    let red_pts = slice.chart.sample(rng, o.samples)?;
    checks.extend(a.validate_slice(slice, &red_pts).checks);
    let red = match a.reduce_with_gamma_shift(slice, ex.gamma_shift.clone()) {
        Ok(r) => r,
        Err(err) => {
            checks.push(Check::failed("reduce", &err.to_string()));
            return Ok(checks);
        }
    };
    checks.extend(reduced_checks(&red, &red_pts, rng, o).unwrap_or_else(|err| vec![Check::failed("reduced", &err.to_string())]));
    let cone_pts = ConeSpace::new(a.structure.clone()).chart.sample(rng, o.samples)?;
    checks.push(Check::at_most("cone-moment-identity", a.cone_moment_residual(&cone_pts)?, e));
    Ok(checks)
}

fn reduced_checks(red: &Reduction, pts: &[Vec<f64>], rng: &mut ChaCha8Rng, o: &RunOptions) -> Result<Vec<Check>> {
    let s = o.tol_scale;
    let rs = &red.structure;
    let mut checks = prefixed("reduced-", rs.validate(pts, s).checks);
    let (mut defect, mut pull) = (Max::default(), Max::default());
    let mut amb_f = Max::default();
    let f_hat = rs.faraday()?;
    let f = red.action.structure.faraday()?;
    for p in pts {
        for h in rs.h_frame(p)? {
            defect.push(linalg::norm(&rs.sasaki_weyl_defect(p, &h)?));
        }
        let q = red.slice.embedding.at(p)?;
        let m = red.slice.dim();
        let e = basis(m);
        for i in 0..m {
            for j in i + 1..m {
                let fh = f_hat.eval(p, &[&e[i], &e[j]])?;
                let (li, lj) = (red.lift(p, &e[i])?, red.lift(p, &e[j])?);
                pull.push((fh - f.eval(&q, &[&li, &lj])?).abs());
                amb_f.push(fh.abs());
            }
        }
    }
    let mut ambient_closed = Max::default();
    for p in pts {
        let q = red.slice.embedding.at(p)?;
        ambient_closed.push(linalg::max_abs(&f.field().expect("components").at(&q)?));
    }
    checks.push(Check::at_most("reduced-sasaki-weyl-defect", defect.0, tolerance::JET_CHAIN * s));
    checks.push(Check::at_most("reduced-curvature-is-pullback", pull.0, tolerance::JET_EXACT * s));
    if ambient_closed.0 <= tolerance::ROUNDING {
        checks.push(Check::at_most("reduced-connection-closed", amb_f.0, tolerance::JET_EXACT * s));
    }
    checks.push(Check::at_most("reeb-projects", red.reeb_residual(pts)?, tolerance::JET_CHAIN * s));
    checks.push(Check::at_most("reduced-endo-lift-independent", red.lift_independence(pts)?, tolerance::JET_EXACT * s));
    let cone_pts = ConeSpace::new(rs.clone()).chart.sample(rng, o.samples)?;
    let (dj, dg) = red.cone_commutativity(&cone_pts)?;
    checks.push(Check::at_most("cone-commutativity-j", dj, tolerance::JET_CHAIN * s));
    checks.push(Check::at_most("cone-commutativity-metric", dg, tolerance::JET_CHAIN * s));
    Ok(checks)
}

/// Straight and wiggly paths from `start` to its image, and a small closed loop.
pub struct Loops {
    pub straight: Loop,
    pub wiggly: Loop,
    pub contractible: Loop,
}

pub fn loops_at(slice: &SliceChart, start: &[f64]) -> Result<Loops> {
    let g = slice.discrete.first().ok_or_else(|| Error::Invalid("slice has no discrete map".into()))?;
    let end = g.forward.at(start)?;
    let (lo, hi) = slice.chart.bounds();
    let s = ["s".to_string()];
    let pi = std::f64::consts::PI;
    let straight = catalog::quotient_loop(slice, start)?;
    let wig: Vec<String> = (0..start.len())
        .map(|i| {
            let amp = 0.05 * (hi[i] - lo[i]) * if i % 2 == 0 { 1.0 } else { -1.0 };
            format!("{:?} + s * {:?} + {amp:?} * sin({pi:?} * s)", start[i], end[i] - start[i])
        })
        .collect();
    let circ: Vec<String> = (0..start.len())
        .map(|i| {
            let eps = 0.05 * (hi[i] - lo[i]);
            match i {
                0 => format!("{:?} + {eps:?} * (cos({:?} * s) - 1)", start[i], 2.0 * pi),
                1 => format!("{:?} + {eps:?} * sin({:?} * s)", start[i], 2.0 * pi),
                _ => format!("{:?}", start[i]),
            }
        })
        .collect();
    let refs = |v: &[String]| -> Vec<String> { v.to_vec() };
    let field = |v: &[String]| -> Result<geometry::Field> {
        let r = refs(v);
        let rr: Vec<&str> = r.iter().map(String::as_str).collect();
        parse_field(&s, &rr)
    };
    Ok(Loops {
        straight,
        wiggly: Loop { path: field(&wig)?, closing: Some(g.forward.clone()) },
        contractible: Loop { path: field(&circ)?, closing: None },
    })
}

fn path_inside(slice: &SliceChart, lp: &Loop) -> Result<bool> {
    for i in 0..=64 {
        if !slice.chart.contains(&lp.path.at(&[i as f64 / 64.0])?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// First sampled start point whose loops stay in the chart.
pub fn find_loops(slice: &SliceChart, rng: &mut ChaCha8Rng) -> Result<Loops> {
    for _ in 0..200 {
        let start = slice.chart.sample(rng, 1)?.remove(0);
        let l = loops_at(slice, &start)?;
        if path_inside(slice, &l.straight)? && path_inside(slice, &l.wiggly)? && path_inside(slice, &l.contractible)? {
            return Ok(l);
        }
    }
    Err(Error::Domain("no quotient loop fits in the reduced chart".into()))
}

fn exactness(ex: &Example, rng: &mut ChaCha8Rng, o: &RunOptions) -> Result<Vec<Check>> {
    let (a, slice) = need_reduction(ex)?;
    let pts = a.structure.chart.sample(rng, o.samples)?;
    let e = tolerance::JET_EXACT * o.tol_scale;
    let rho = a.rho(&pts)?;
    let mut checks = vec![
        Check::at_most("rho-constant", rho.spread, e),
        Check::at_most("rho-proportional", rho.proportionality, e),
        Check::at_most("rho-multiplicative", rho.word_residual, e),
    ];
    let gauged = catalog::invariant_gauge(a)?;
    let inv = gauged.rho(&pts)?;
    checks.push(Check::at_most("invariant-gauge-rho-is-one", (inv.factors[0] - 1.0).abs(), e));
    let red = gauged.reduce(slice)?;
    let loops = find_loops(slice, rng)?;
    let h = exactness_check(&red.structure, &loops.straight)?;
    let hw = exactness_check(&red.structure, &loops.wiggly)?;
    let hc = exactness_check(&red.structure, &loops.contractible)?;
    let log_rho = rho.factors[0].ln();
    checks.extend([
        Check::at_most("holonomy-equals-log-rho", (h.value - log_rho).abs(), tolerance::JET_CHAIN * o.tol_scale),
        Check::at_least("holonomy-nonzero", h.value.abs(), 0.5),
        Check::at_most("holonomy-homotopy-invariant", (h.value - hw.value).abs(), tolerance::JET_CHAIN * o.tol_scale),
        Check::at_most("contractible-holonomy-zero", hc.value.abs(), e),
    ]);
    Ok(checks)
}
