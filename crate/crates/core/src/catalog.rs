//! Built-in structures, actions and slices.

use serde::{Deserialize, Serialize};

use crate::cone::ConeSpace;
use crate::crweyl::{project_along, CRWeylStructure};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::{self, apply_matrix, contract1, fn_field, parse_field, Chart, EndomorphismField, KForm, VectorField};
use crate::jet::Jet;
use crate::reduction::{DiscreteMap, GroupActionSpec, Loop, SParam, SliceChart};
use crate::suites::Suite;

pub fn example2_coords(n: usize) -> Vec<String> {
    let mut c: Vec<String> = (1..=n).flat_map(|p| [format!("x{p}"), format!("y{p}")]).collect();
    c.push("t".into());
    c
}

pub fn example2_chart(n: usize) -> Chart {
    let coords = example2_coords(n);
    let mut lo = vec![-1.5; 2 * n];
    let mut hi = vec![1.5; 2 * n];
    lo.push(0.5);
    hi.push(2.0);
    let zsq: Vec<String> = (1..=n).map(|p| format!("x{p}^2 + y{p}^2")).collect();
    let excl = Expression::parse(&format!("{} - 0.01", zsq.join(" + ")), &coords).expect("static expression");
    Chart::new(&coords, lo, hi).with_positive(excl)
}

/// Component strings of the contact form `sum x dy - y dx - dt`.
pub fn example2_theta_sources(n: usize) -> Vec<String> {
    let mut s: Vec<String> = (1..=n).flat_map(|p| [format!("-y{p}"), format!("x{p}")]).collect();
    s.push("-1".into());
    s
}

/// Rows of the endomorphism: the standard complex structure on the `z` block,
/// with the `t` row chosen so that `H` is preserved.
pub fn example2_endo_sources(n: usize) -> Vec<Vec<String>> {
    let d = 2 * n + 1;
    let mut rows = vec![vec!["0".to_string(); d]; d];
    for p in 0..n {
        let (x, y) = (2 * p, 2 * p + 1);
        rows[y][x] = "1".into();
        rows[x][y] = "-1".into();
        rows[d - 1][x] = format!("x{}", p + 1);
        rows[d - 1][y] = format!("y{}", p + 1);
    }
    rows
}

fn build(chart: Chart, theta: &[String], gamma: &[String], endo: &[Vec<String>]) -> Result<CRWeylStructure> {
    let coords = chart.coords().to_vec();
    let th: Vec<&str> = theta.iter().map(String::as_str).collect();
    let ga: Vec<&str> = gamma.iter().map(String::as_str).collect();
    let rows: Vec<Vec<&str>> = endo.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
    CRWeylStructure::new(
        chart,
        KForm::parse_one_form(&coords, &th)?,
        KForm::parse_one_form(&coords, &ga)?,
        EndomorphismField::parse(&coords, &rows)?,
    )
}

fn gamma_with(n: usize, entries: &[(usize, &str)]) -> Vec<String> {
    let mut g = vec!["0".to_string(); 2 * n + 1];
    for &(i, e) in entries {
        g[i] = e.to_string();
    }
    g
}

/// `sum_p x_p dy_p - y_p dx_p - dt` on `C^n \ {0} x R_{>0}`, `gamma = 0`.
pub fn example2_structure(n: usize) -> Result<CRWeylStructure> {
    if n == 0 {
        return Err(Error::Invalid("n must be positive".into()));
    }
    build(example2_chart(n), &example2_theta_sources(n), &gamma_with(n, &[]), &example2_endo_sources(n))
}

/// Example 2 with `gamma = x1 dx1`: closed, but the Reeb field loses the
/// Sasaki-Weyl property.
pub fn example2_broken(n: usize) -> Result<CRWeylStructure> {
    build(example2_chart(n), &example2_theta_sources(n), &gamma_with(n, &[(0, "x1")]), &example2_endo_sources(n))
}

/// Example 2 with `gamma = x1 dy1`, whose curvature `dx1 ^ dy1` is not a
/// multiple of `d theta0` on `H`.
pub fn example2_nonfactor(n: usize) -> Result<CRWeylStructure> {
    build(example2_chart(n), &example2_theta_sources(n), &gamma_with(n, &[(1, "x1")]), &example2_endo_sources(n))
}

/// Example 2 with a non-integrable complex structure on `H`: the standard one
/// conjugated by `P = 1 + c x1 E`, where `E` maps `dx1` to `dx2`.
pub fn example2_broken_cr(n: usize, c: f64) -> Result<CRWeylStructure> {
    if n < 2 {
        return Err(Error::Invalid("the broken CR control needs n >= 2".into()));
    }
    let m = 2 * n;
    let mut j = vec![vec![0.0; m]; m];
    for p in 0..n {
        j[2 * p + 1][2 * p] = 1.0;
        j[2 * p][2 * p + 1] = -1.0;
    }
    let mut e = vec![vec![0.0; m]; m];
    e[2][0] = 1.0;
    let mul = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..m).map(|i| (0..m).map(|k| (0..m).map(|l| a[i][l] * b[l][k]).sum()).collect()).collect()
    };
    // P J P^-1 = J + s (EJ - JE) - s^2 EJE with s = c x1
    let ej = mul(&e, &j);
    let je = mul(&j, &e);
    let eje = mul(&ej, &e);
    let s = format!("({c:?} * x1)");
    let entry = |i: usize, k: usize| -> String {
        let (a, b, d) = (j[i][k], ej[i][k] - je[i][k], -eje[i][k]);
        format!("({a:?} + {b:?} * {s} + {d:?} * {s}^2)")
    };
    let d = m + 1;
    let mut rows = vec![vec!["0".to_string(); d]; d];
    for i in 0..m {
        for k in 0..m {
            rows[i][k] = entry(i, k);
        }
    }
    // t row: theta_z applied to the z block keeps H invariant
    for k in 0..m {
        let terms: Vec<String> = (0..n)
            .flat_map(|p| {
                [format!("(-y{}) * {}", p + 1, entry(2 * p, k)), format!("x{} * {}", p + 1, entry(2 * p + 1, k))]
            })
            .collect();
        rows[d - 1][k] = terms.join(" + ");
    }
    build(example2_chart(n), &example2_theta_sources(n), &gamma_with(n, &[]), &rows)
}

/// `gamma = kappa * theta0` on a Sasaki base: the Reeb field and the
/// Sasaki-Weyl property are unchanged, the curvature is `d(kappa theta0)`.
pub fn example1(base: &CRWeylStructure, kappa: &str) -> Result<CRWeylStructure> {
    let k = parse_field(base.chart.coords(), &[kappa])?;
    base.with_gamma(base.gamma.add(&base.theta0.scaled(&k))?)
}

pub fn sphere_coords(n: usize) -> Vec<String> {
    let mut c = vec!["y1".to_string()];
    for p in 2..=n {
        c.push(format!("x{p}"));
        c.push(format!("y{p}"));
    }
    c
}

fn sphere_s(n: usize) -> String {
    let sq: Vec<String> = sphere_coords(n).iter().map(|c| format!("{c}^2")).collect();
    format!("sqrt(1 - {})", sq.join(" - "))
}

/// Graph patch of `S^{2n-1}` around `(1, 0, ..., 0)`, with `x1 = sqrt(1 - |c|^2)`.
pub fn sphere_chart(n: usize) -> Chart {
    let coords = sphere_coords(n);
    let d = coords.len();
    let sq: Vec<String> = coords.iter().map(|c| format!("{c}^2")).collect();
    let excl = Expression::parse(&format!("0.81 - {}", sq.join(" - ")), &coords).expect("static expression");
    Chart::new(&coords, vec![-0.5; d], vec![0.5; d]).with_positive(excl)
}

/// Ambient coordinates `(x1, y1, ..., xn, yn)` of a sphere-chart point.
pub fn sphere_embedding(n: usize) -> Result<geometry::Field> {
    let coords = sphere_coords(n);
    let mut src = vec![sphere_s(n)];
    src.extend(coords.iter().cloned());
    let refs: Vec<&str> = src.iter().map(String::as_str).collect();
    parse_field(&coords, &refs)
}

/// The round CR sphere with `sum x dy - y dx` restricted.
pub fn sphere(n: usize) -> Result<CRWeylStructure> {
    if n < 2 {
        return Err(Error::Invalid("sphere needs n >= 2".into()));
    }
    let coords = sphere_coords(n);
    let d = coords.len();
    let s = sphere_s(n);
    let mut theta = vec![format!("{s} + y1^2 / {s}")];
    for p in 2..=n {
        theta.push(format!("y1 * x{p} / {s} - y{p}"));
        theta.push(format!("y1 * y{p} / {s} + x{p}"));
    }
    let mut rows = vec![vec!["0".to_string(); d]; d];
    for (i, c) in coords.iter().enumerate() {
        rows[0][i] = format!("-{c} / {s}");
    }
    for p in 0..n - 1 {
        let (x, y) = (1 + 2 * p, 2 + 2 * p);
        rows[x][y] = "-1".into();
        rows[y][x] = "1".into();
    }
    build(sphere_chart(n), &theta, &vec!["0".to_string(); d], &rows)
}

/// Reeb field of the sphere in chart components, `(x1, -y2, x2, ...)`.
pub fn sphere_reeb_sources(n: usize) -> Vec<String> {
    let mut v = vec![sphere_s(n)];
    for p in 2..=n {
        v.push(format!("-y{p}"));
        v.push(format!("x{p}"));
    }
    v
}

/// `N x R_{>0, r} x R_{>0, t}` over the sphere patch `N`, with
/// `theta = r^2/2 theta_N - dt` and the Kahler-cone complex structure lifted
/// to preserve `ker theta`.
pub fn example3_structure(n: usize) -> Result<CRWeylStructure> {
    let base = sphere(n)?;
    let mut coords = base.chart.coords().to_vec();
    let m = coords.len();
    coords.push("r".into());
    coords.push("t".into());
    let d = m + 2;
    let (blo, bhi) = base.chart.bounds();
    let mut lo = blo.to_vec();
    let mut hi = bhi.to_vec();
    // wide enough in r and t that a path to the lambda = 2 image fits
    lo.extend([0.4, 0.2]);
    hi.extend([2.5, 3.0]);
    let base_chart = base.chart.clone();
    let chart = Chart::new(&coords, lo, hi).with_constraint("sphere patch", move |p| base_chart.contains(&p[..m]));

    let bth = base.theta_field().clone();
    let theta_field = fn_field(d, d, move |p, k| {
        let seeds = Jet::seed(p, k);
        let tn = germ_on_product(&bth, p, k, m)?;
        let half_r2 = (&seeds[m] * &seeds[m]).scale(0.5);
        let mut out: Vec<Jet> = tn.iter().map(|c| c * &half_r2).collect();
        out.push(seeds[0].zero_like());
        out.push(seeds[0].lift_const(-1.0));
        Ok(out)
    });
    let reeb_src = sphere_reeb_sources(n);
    let refs: Vec<&str> = reeb_src.iter().map(String::as_str).collect();
    let tn_field = parse_field(base.chart.coords(), &refs)?;
    let an = base.endo.0.clone();
    let bth = base.theta_field().clone();
    let endo_field = fn_field(d, d * d, move |p, k| {
        let seeds = Jet::seed(p, k);
        let r = &seeds[m];
        let th = germ_on_product(&bth, p, k, m)?;
        let tn = germ_on_product(&tn_field, p, k, m)?;
        let a = germ_on_product(&an, p, k, m)?;
        let zero = seeds[0].zero_like();
        let rinv = r.recip()?;
        let half_r2 = (r * r).scale(0.5);
        let mut cols: Vec<Vec<Jet>> = Vec::with_capacity(d);
        for j in 0..d {
            // cone part of the image of e_j
            let mut w = vec![zero.clone(); m + 1];
            if j < m {
                let mut u = vec![zero.clone(); m];
                u[j] = zero.lift_const(1.0);
                let uh = project_along(&th, &tn, &u);
                let iu = apply_matrix(&a, &uh);
                w[..m].clone_from_slice(&iu);
                w[m] = -(r * &th[j]);
            } else if j == m {
                for (wi, ti) in w.iter_mut().zip(&tn) {
                    *wi = ti * &rinv;
                }
            }
            let tau = &half_r2 * &contract1(&th, &w[..m]);
            w.push(tau);
            cols.push(w);
        }
        let mut out = vec![zero.clone(); d * d];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                out[i * d + j] = v.clone();
            }
        }
        Ok(out)
    });
    CRWeylStructure::new(
        chart,
        KForm::one_form(theta_field),
        KForm::zero(1, d),
        EndomorphismField::new(endo_field),
    )
}

/// Germ of a field on the first `m` coordinates, re-expanded in all of them.
pub fn germ_on_product(f: &geometry::Field, p: &[f64], k: usize, m: usize) -> Result<Vec<Jet>> {
    let seeds = Jet::seed(p, k);
    let g = f.germ(&p[..m], k)?;
    Ok(g.iter().map(|c| c.compose(&seeds[..m])).collect())
}

fn map_field(coords: &[String], sources: &[String]) -> Result<geometry::Field> {
    let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
    parse_field(coords, &refs)
}

fn check_example2_params(n: usize, weights: &[i64], lambda: f64) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Invalid(format!("expected {n} weights, got {}", weights.len())));
    }
    if !(weights.iter().any(|&a| a > 0) && weights.iter().any(|&a| a < 0)) {
        return Err(Error::Invalid("weights must not all have the same sign".into()));
    }
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must exceed 1, got {lambda}")));
    }
    Ok(())
}

/// Dilation `(z, t) -> (l z, l^2 t)` and its inverse.
fn example2_dilation(n: usize, lambda: f64) -> Result<DiscreteMap> {
    let coords = example2_coords(n);
    let scaled = |l: f64| -> Vec<String> {
        let mut v: Vec<String> = coords[..2 * n].iter().map(|c| format!("{l:?} * {c}")).collect();
        v.push(format!("{:?} * t", l * l));
        v
    };
    Ok(DiscreteMap {
        name: format!("dilation by {lambda}"),
        forward: map_field(&coords, &scaled(lambda))?,
        inverse: map_field(&coords, &scaled(1.0 / lambda))?,
    })
}

/// The `S^1 x Z` action `(e^{i a_p s} l^m z_p, l^{2m} t)` on Example 2.
pub fn example2_action(n: usize, weights: &[i64], lambda: f64) -> Result<GroupActionSpec> {
    check_example2_params(n, weights, lambda)?;
    let structure = example2_structure(n)?;
    let coords = example2_coords(n);
    let mut xi: Vec<String> = Vec::new();
    for (p, a) in weights.iter().enumerate() {
        xi.push(format!("{} * y{}", -a, p + 1));
        xi.push(format!("{a} * x{}", p + 1));
    }
    xi.push("0".into());
    let refs: Vec<&str> = xi.iter().map(String::as_str).collect();
    let generator = VectorField::parse(&coords, &refs)?;
    let s_param = if n == 2 {
        // |z2|^2 = c^2 |z1|^2 with c^2 = -a1 / a2
        let c = (-(weights[0] as f64) / weights[1] as f64).sqrt();
        let pc: Vec<String> = ["a1", "a2", "rho", "t"].iter().map(|s| s.to_string()).collect();
        let src = [
            "rho * cos(a1)".to_string(),
            "rho * sin(a1)".into(),
            format!("{c:?} * rho * cos(a2)"),
            format!("{c:?} * rho * sin(a2)"),
            "t".into(),
        ];
        let pi = std::f64::consts::PI;
        Some(SParam {
            chart: Chart::new(&pc, vec![-pi, -pi, 0.3, 0.5], vec![pi, pi, 0.9, 2.0]),
            map: map_field(&pc, &src)?,
        })
    } else {
        None
    };
    Ok(GroupActionSpec {
        structure,
        generators: vec![generator],
        discrete: vec![example2_dilation(n, lambda)?],
        s_param,
    })
}

pub fn reduced_coords() -> Vec<String> {
    ["phi", "u1", "u2"].iter().map(|s| s.to_string()).collect()
}

fn reduced_dilation(lambda: f64) -> Result<DiscreteMap> {
    let c = reduced_coords();
    let shift = |l: f64| -> Vec<String> {
        vec!["phi".into(), format!("u1 + {:?}", l.ln()), format!("u2 + {:?}", 2.0 * l.ln())]
    };
    Ok(DiscreteMap {
        name: format!("dilation by {lambda}"),
        forward: map_field(&c, &shift(lambda))?,
        inverse: map_field(&c, &shift(1.0 / lambda))?,
    })
}

fn example2_slice_with(lambda: f64, z2_phase: &str) -> Result<SliceChart> {
    let c = reduced_coords();
    let r = "exp(u1) / sqrt(2)";
    let src = [
        format!("{r} * cos(phi / 2)"),
        format!("{r} * sin(phi / 2)"),
        format!("{r} * cos({z2_phase})"),
        format!("{r} * sin({z2_phase})"),
        "exp(u2)".into(),
    ];
    Ok(SliceChart {
        chart: Chart::new(&c, vec![-3.0, -1.2, -1.0], vec![3.0, 0.3, 1.0]),
        embedding: map_field(&c, &src)?,
        discrete: vec![reduced_dilation(lambda)?],
    })
}

/// Slice `z1 = z2 = r e^{i phi / 2}`, `|z|^2 = e^{2 u1}`, `t = e^{u2}` of
/// `S` for `n = 2`, weights `(1, -1)`. The phase `phi` is that of `z1 z2`,
/// which the circle action preserves.
pub fn example2_slice(lambda: f64) -> Result<SliceChart> {
    example2_slice_with(lambda, "phi / 2")
}

/// `z2 = r e^{-i phi / 2}`: the phase runs along the orbits, so this slice
/// is not transverse.
pub fn example2_perturbed_slice(lambda: f64) -> Result<SliceChart> {
    example2_slice_with(lambda, "-phi / 2")
}

/// The same action in the gauge `theta0 / t`, `gamma = dt / t`, in which the
/// dilation preserves `theta0` exactly.
pub fn invariant_gauge(action: &GroupActionSpec) -> Result<GroupActionSpec> {
    let t = action.structure.chart.coords().iter().position(|c| c == "t").ok_or_else(|| Error::Invalid("no t coordinate".into()))?;
    let d = action.structure.dim();
    let u = fn_field(d, 1, move |p, k| Ok(vec![Jet::variable(d, k, t, p[t]).ln()?]));
    Ok(GroupActionSpec { structure: action.structure.gauge_transform(&u)?, ..action.clone() })
}

/// Straight path from `start` to its image under the reduced dilation.
pub fn quotient_loop(slice: &SliceChart, start: &[f64]) -> Result<Loop> {
    let g = slice.discrete.first().ok_or_else(|| Error::Invalid("slice has no discrete map".into()))?;
    let end = g.forward.at(start)?;
    let src: Vec<String> = start.iter().zip(&end).map(|(a, b)| format!("{a:?} + s * {:?}", b - a)).collect();
    Ok(Loop { path: map_field(&["s".to_string()], &src)?, closing: Some(g.forward.clone()) })
}

/// The radial dilation `(x, r, t) -> (x, l r, l^2 t)` on Example 3, with
/// trivial identity component.
pub fn example3_action(n: usize, lambda: f64) -> Result<(GroupActionSpec, SliceChart)> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must exceed 1, got {lambda}")));
    }
    let structure = example3_structure(n)?;
    let coords = structure.chart.coords().to_vec();
    let m = coords.len() - 2;
    let scaled = |l: f64| -> Vec<String> {
        let mut v: Vec<String> = coords[..m].to_vec();
        v.push(format!("{l:?} * r"));
        v.push(format!("{:?} * t", l * l));
        v
    };
    let g = DiscreteMap {
        name: format!("radial dilation by {lambda}"),
        forward: map_field(&coords, &scaled(lambda))?,
        inverse: map_field(&coords, &scaled(1.0 / lambda))?,
    };
    let mut slice = SliceChart::identity(&structure);
    slice.discrete.push(g.clone());
    Ok((GroupActionSpec { structure, generators: Vec::new(), discrete: vec![g], s_param: None }, slice))
}

/// Parameters shared by the catalog factories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub weights: Vec<i64>,
    pub lambda: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params { n: 2, weights: vec![1, -1], lambda: 2.0 }
    }
}

/// A structure ready for the suites, with whatever reduction data it carries.
#[derive(Clone)]
pub struct Example {
    pub name: String,
    pub params: serde_json::Value,
    pub structure: CRWeylStructure,
    pub action: Option<GroupActionSpec>,
    pub slice: Option<SliceChart>,
    /// `-1` runs the cone suites with the conjugate complex structure.
    pub j_sign: f64,
    /// Exact shift `dh` added to the reduced Weyl form.
    pub gamma_shift: Option<geometry::Field>,
}

impl Example {
    fn plain(name: &str, params: serde_json::Value, structure: CRWeylStructure) -> Example {
        Example { name: name.into(), params, structure, action: None, slice: None, j_sign: 1.0, gamma_shift: None }
    }

    pub fn cone(&self) -> ConeSpace {
        let c = ConeSpace::new(self.structure.clone());
        if self.j_sign < 0.0 {
            c.conjugate()
        } else {
            c
        }
    }
}

pub struct ExampleDescriptor {
    pub name: &'static str,
    pub summary: &'static str,
    /// Suites that must fail; every other applicable suite must pass.
    pub expected_failures: &'static [Suite],
    build: fn(&Params) -> Result<Example>,
}

impl ExampleDescriptor {
    pub fn build(&self, p: &Params) -> Result<Example> {
        (self.build)(p)
    }

    pub fn expected_pass(&self, s: Suite) -> bool {
        !self.expected_failures.contains(&s)
    }
}

fn ex2_params(p: &Params) -> serde_json::Value {
    serde_json::json!({ "n": p.n, "weights": p.weights, "lambda": p.lambda })
}

fn with_reduction(name: &str, p: &Params, structure: CRWeylStructure) -> Result<Example> {
    let mut ex = Example::plain(name, ex2_params(p), structure);
    let action = example2_action(p.n, &p.weights, p.lambda)?;
    if p.n == 2 && p.weights == [1, -1] {
        ex.slice = Some(example2_slice(p.lambda)?);
        ex.action = Some(action);
    }
    Ok(ex)
}

fn build_example2(p: &Params) -> Result<Example> {
    with_reduction("example2", p, example2_structure(p.n)?)
}

fn build_broken(p: &Params) -> Result<Example> {
    check_example2_params(p.n, &p.weights, p.lambda)?;
    Ok(Example::plain("example2-broken", ex2_params(p), example2_broken(p.n)?))
}

fn build_nonfactor(p: &Params) -> Result<Example> {
    check_example2_params(p.n, &p.weights, p.lambda)?;
    Ok(Example::plain("example2-nonfactor", ex2_params(p), example2_nonfactor(p.n)?))
}

fn build_broken_cr(p: &Params) -> Result<Example> {
    check_example2_params(p.n, &p.weights, p.lambda)?;
    Ok(Example::plain("example2-broken-cr", ex2_params(p), example2_broken_cr(p.n, 0.3)?))
}

fn build_conjugate(p: &Params) -> Result<Example> {
    check_example2_params(p.n, &p.weights, p.lambda)?;
    let mut ex = Example::plain("example2-conjugate-j", ex2_params(p), example2_structure(p.n)?);
    ex.j_sign = -1.0;
    Ok(ex)
}

fn build_perturbed_slice(p: &Params) -> Result<Example> {
    let mut ex = with_reduction("example2-perturbed-slice", p, example2_structure(p.n)?)?;
    if ex.slice.is_none() {
        return Err(Error::Invalid("the slice controls need n = 2 and weights 1,-1".into()));
    }
    ex.slice = Some(example2_perturbed_slice(p.lambda)?);
    Ok(ex)
}

fn build_wrong_gamma(p: &Params) -> Result<Example> {
    let mut ex = with_reduction("example2-wrong-gamma", p, example2_structure(p.n)?)?;
    if ex.slice.is_none() {
        return Err(Error::Invalid("the slice controls need n = 2 and weights 1,-1".into()));
    }
    ex.gamma_shift = Some(parse_field(&reduced_coords(), &["0.5 * u1 * sin(phi)"])?);
    Ok(ex)
}

fn example1_params(p: &Params, kappa: &str) -> serde_json::Value {
    serde_json::json!({ "n": p.n, "kappa": kappa })
}

fn build_example1(p: &Params) -> Result<Example> {
    Ok(Example::plain("example1", example1_params(p, "1"), example1(&example2_structure(p.n)?, "1")?))
}

fn build_example1_x1(p: &Params) -> Result<Example> {
    Ok(Example::plain("example1-x1", example1_params(p, "x1"), example1(&example2_structure(p.n)?, "x1")?))
}

fn build_sphere(p: &Params) -> Result<Example> {
    Ok(Example::plain("sphere", serde_json::json!({ "n": p.n }), sphere(p.n)?))
}

fn build_example3(p: &Params) -> Result<Example> {
    let (action, slice) = example3_action(p.n, p.lambda)?;
    let mut ex = Example::plain("example3", serde_json::json!({ "n": p.n, "lambda": p.lambda }), action.structure.clone());
    ex.action = Some(action);
    ex.slice = Some(slice);
    Ok(ex)
}

use Suite::{Cone, Cr, Lck, Reduction as Red, SasakiWeyl};

pub const EXAMPLES: &[ExampleDescriptor] = &[
    ExampleDescriptor { name: "example2", summary: "flat Sasaki structure on C^n x R with its circle and dilation actions", expected_failures: &[], build: build_example2 },
    ExampleDescriptor { name: "example2-broken", summary: "gamma = x1 dx1: closed but not Sasaki-Weyl", expected_failures: &[SasakiWeyl, Cone, Lck], build: build_broken },
    ExampleDescriptor { name: "example2-nonfactor", summary: "gamma = x1 dy1: curvature not a multiple of d theta0", expected_failures: &[SasakiWeyl, Cone, Lck], build: build_nonfactor },
    ExampleDescriptor { name: "example2-broken-cr", summary: "non-integrable complex structure on H", expected_failures: &[Cr, Cone, Lck], build: build_broken_cr },
    ExampleDescriptor { name: "example2-conjugate-j", summary: "cone built with the conjugate complex structure", expected_failures: &[Cone, Lck], build: build_conjugate },
    ExampleDescriptor { name: "example2-perturbed-slice", summary: "slice running along the circle orbits", expected_failures: &[Red, Suite::Exactness], build: build_perturbed_slice },
    ExampleDescriptor { name: "example2-wrong-gamma", summary: "reduced Weyl form shifted by an exact form", expected_failures: &[Red], build: build_wrong_gamma },
    ExampleDescriptor { name: "example1", summary: "Example 2 with gamma = theta0, a parallel non-closed connection", expected_failures: &[], build: build_example1 },
    ExampleDescriptor { name: "example1-x1", summary: "Example 2 with gamma = x1 theta0", expected_failures: &[Cone, Lck], build: build_example1_x1 },
    ExampleDescriptor { name: "sphere", summary: "round CR sphere on a graph patch", expected_failures: &[], build: build_sphere },
    ExampleDescriptor { name: "example3", summary: "sphere cone as a Sasaki manifold with the radial dilation", expected_failures: &[], build: build_example3 },
];

pub fn descriptor(name: &str) -> Option<&'static ExampleDescriptor> {
    EXAMPLES.iter().find(|d| d.name == name)
}

pub fn build_example(name: &str, p: &Params) -> Result<Example> {
    descriptor(name).ok_or_else(|| Error::Invalid(format!("unknown example {name}")))?.build(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use rand::SeedableRng;

    fn pts(s: &CRWeylStructure, n: usize) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        s.chart.sample(&mut rng, n).unwrap()
    }

    #[test]
    fn example2_is_valid_sasaki() {
        let s = example2_structure(2).unwrap();
        let p = pts(&s, 10);
        let r = s.validate(&p, 1.0);
        assert!(r.pass(), "{:?}", r.checks);
    }

    #[test]
    fn sphere_is_valid() {
        let s = sphere(2).unwrap();
        let p = pts(&s, 10);
        let r = s.validate(&p, 1.0);
        assert!(r.pass(), "{:?}", r.checks);
        let t = s.reeb_field(&[0.0, 0.0, 0.0]).unwrap();
        assert!(linalg::norm(&linalg::sub(&t, &[1.0, 0.0, 0.0])) < 1e-14);
        for q in &p {
            for v in s.h_frame(q).unwrap() {
                assert!(linalg::norm(&s.sasaki_weyl_defect(q, &v).unwrap()) < 1e-9);
            }
        }
    }

    #[test]
    fn sphere_theta_is_restriction() {
        let s = sphere(2).unwrap();
        let c = ["x1", "y1", "x2", "y2"];
        let ambient = KForm::parse_one_form(&c, &["-y1", "x1", "-y2", "x2"]).unwrap();
        let pulled = ambient.pullback(&sphere_embedding(2).unwrap()).unwrap();
        for q in pts(&s, 5) {
            let a = pulled.field().unwrap().at(&q).unwrap();
            let b = s.theta_field().at(&q).unwrap();
            assert!(linalg::norm(&linalg::sub(&a, &b)) < 1e-13);
        }
    }

    #[test]
    fn broken_cr_fails_integrability_only() {
        let s = example2_broken_cr(2, 0.3).unwrap();
        let r = s.validate(&pts(&s, 20), 1.0);
        assert!(!r.get("cr-integrability").unwrap().pass);
        assert!(r.get("cr-integrability").unwrap().max_residual > 1e-3);
        for name in ["endo-preserves-h", "endo-squares-to-minus-one", "pseudoconvexity", "reeb-equations"] {
            assert!(r.get(name).unwrap().pass, "{name}: {:?}", r.checks);
        }
    }

    #[test]
    fn example3_is_valid_sasaki() {
        let s = example3_structure(2).unwrap();
        let p = pts(&s, 8);
        let r = s.validate(&p, 1.0);
        assert!(r.pass(), "{:?}", r.checks);
        for q in &p {
            let t = s.reeb_field(q).unwrap();
            assert!(linalg::norm(&linalg::sub(&t, &[0.0, 0.0, 0.0, 0.0, -1.0])) < 1e-12);
            for v in s.h_frame(q).unwrap() {
                assert!(linalg::norm(&s.sasaki_weyl_defect(q, &v).unwrap()) < 1e-9);
            }
        }
    }
}
