//! CR structures with a Weyl connection, in a fixed trivialization.
//!
//! A structure is a chart of odd dimension `2n + 1` with a contact form
//! `theta0` (its kernel is `H`), an endomorphism field `A` whose restriction to
//! `H` is the CR complex structure `I`, and the connection 1-form `gamma`.
//! `I` is applied to arbitrary vectors after projecting onto `H` along the Reeb
//! field, so `A` only matters on `H`.

use crate::error::{Error, Result};
use crate::geometry::{
    self, apply_matrix, bracket_germ, contract1, fn_field, raise, scale_germ, sub_germs, values, Chart,
    EndomorphismField, Field, KForm, VectorField,
};
use crate::jet::Jet;
use crate::linalg::{self, solve_jets};
use crate::report::{Check, Max, Min, ValidationReport};
use crate::tolerance;

#[derive(Clone)]
pub struct CRWeylStructure {
    pub chart: Chart,
    pub theta0: KForm,
    pub gamma: KForm,
    pub endo: EndomorphismField,
}

impl std::fmt::Debug for CRWeylStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CRWeylStructure").field("chart", &self.chart).finish_non_exhaustive()
    }
}

/// `v - theta(v) t`.
pub fn project_along(theta: &[Jet], t: &[Jet], v: &[Jet]) -> Vec<Jet> {
    let a = contract1(theta, v);
    sub_germs(v, &scale_germ(&a, t))
}

/// Euclidean-orthogonal projection onto `ker theta`.
pub fn project_orthogonal(theta: &[Jet], v: &[Jet]) -> Result<Vec<Jet>> {
    let norm2 = contract1(theta, theta);
    let a = contract1(theta, v).div(&norm2)?;
    Ok(sub_germs(v, &scale_germ(&a, theta)))
}

impl CRWeylStructure {
    pub fn new(chart: Chart, theta0: KForm, gamma: KForm, endo: EndomorphismField) -> Result<CRWeylStructure> {
        let d = chart.dim();
        if d % 2 == 0 || d < 3 {
            return Err(Error::Invalid(format!("chart dimension {d} is not 2n+1 with n >= 1")));
        }
        for (name, f) in [("theta0", &theta0), ("gamma", &gamma)] {
            if f.degree() != 1 || f.nvars() != d || f.field().is_none() {
                return Err(Error::Invalid(format!("{name} must be a 1-form in components on the chart")));
            }
        }
        if endo.dim() != d {
            return Err(Error::Dimension { expected: d, got: endo.dim() });
        }
        Ok(CRWeylStructure { chart, theta0, gamma, endo })
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Complex dimension of `H`.
    pub fn n(&self) -> usize {
        (self.dim() - 1) / 2
    }

    pub fn theta_field(&self) -> &Field {
        self.theta0.field().expect("component form")
    }

    pub fn gamma_field(&self) -> &Field {
        self.gamma.field().expect("component form")
    }

    /// `d theta0 + gamma ^ theta0`, the trivialized `d^D eta`.
    pub fn beta(&self) -> KForm {
        let (th, g) = (self.theta_field().clone(), self.gamma_field().clone());
        let d = self.dim();
        KForm::from_field(
            2,
            fn_field(d, d * d, move |p, k| {
                let t1 = th.germ(p, raise(k)?)?;
                let gg = g.germ(p, k)?;
                let t0: Vec<Jet> = t1.iter().map(|c| c.truncate(k)).collect();
                let dth = geometry::d1_germ(&t1);
                let w = geometry::wedge11_germ(&gg, &t0);
                Ok(dth.iter().zip(&w).map(|(a, b)| a + b).collect())
            }),
        )
    }

    /// Reeb field `T0`: `theta0(T0) = 1`, `i_T0 beta = 0`.
    pub fn reeb(&self) -> VectorField {
        let beta = self.beta().field().expect("component form").clone();
        let th = self.theta_field().clone();
        let d = self.dim();
        VectorField(fn_field(d, d, move |p, k| {
            let b = beta.germ(p, k)?;
            let t = th.germ(p, k)?;
            Ok(reeb_solve(&b, &t)?)
        }))
    }

    pub fn reeb_field(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.reeb().at(p)
    }

    /// The field `X - theta0(X) T0`.
    pub fn project_h(&self, x: &VectorField) -> VectorField {
        let (th, t, x) = (self.theta_field().clone(), self.reeb().0, x.0.clone());
        let d = self.dim();
        VectorField(fn_field(d, d, move |p, k| Ok(project_along(&th.germ(p, k)?, &t.germ(p, k)?, &x.germ(p, k)?))))
    }

    /// `I X = A (X - theta0(X) T0)`.
    pub fn apply_i(&self, x: &VectorField) -> VectorField {
        let a = self.endo.0.clone();
        let px = self.project_h(x).0;
        let d = self.dim();
        VectorField(fn_field(d, d, move |p, k| Ok(apply_matrix(&a.germ(p, k)?, &px.germ(p, k)?))))
    }

    pub fn apply_i_at(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.apply_i(&VectorField::constant(v.to_vec())).at(p)
    }

    /// Coordinate-constant field projected onto `H` along the Reeb field.
    pub fn h_extension(&self, v: &[f64]) -> VectorField {
        self.project_h(&VectorField::constant(v.to_vec()))
    }

    pub fn project_h_at(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.h_extension(v).at(p)
    }

    pub fn check_horizontal(&self, p: &[f64], v: &[f64]) -> Result<()> {
        let th = self.theta_field().at(p)?;
        let r = geometry::eval1(&th, v);
        if r.abs() > tolerance::IN_H * linalg::norm(&th).max(1.0) * linalg::norm(v).max(1.0) {
            return Err(Error::NotHorizontal { residual: r });
        }
        Ok(())
    }

    /// `g0(v, w) = 1/2 d theta0(v, I w)` for `v, w` in `H`.
    pub fn levi_metric(&self, p: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
        self.check_horizontal(p, v)?;
        self.check_horizontal(p, w)?;
        let iw = self.endo.apply(p, w)?;
        Ok(0.5 * self.theta0.d()?.eval(p, &[v, &iw])?)
    }

    /// Euclidean-orthonormal basis of `H` at `p`.
    pub fn h_frame(&self, p: &[f64]) -> Result<Vec<Vec<f64>>> {
        let th = self.theta_field().at(p)?;
        let nt = linalg::dot(&th, &th);
        if nt == 0.0 {
            return Err(Error::Invalid("theta0 vanishes".into()));
        }
        let d = self.dim();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut candidates: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                let a = th[i] / nt;
                linalg::axpy(-a, &th, &e)
            })
            .collect();
        // most informative candidates first keeps Gram-Schmidt well conditioned
        candidates.sort_by(|a, b| linalg::norm(b).total_cmp(&linalg::norm(a)));
        for mut v in candidates {
            for b in &basis {
                let c = linalg::dot(&v, b);
                v = linalg::axpy(-c, b, &v);
            }
            let nv = linalg::norm(&v);
            if nv > 1e-8 && basis.len() < d - 1 {
                basis.push(linalg::scale(1.0 / nv, &v));
            }
        }
        Ok(basis)
    }

    pub fn faraday(&self) -> Result<KForm> {
        self.gamma.d()
    }

    /// `L_{psi^D}(I)(X)` in the trivialization:
    /// `([T0, IX] + gamma(IX) T0) - I([T0, X] + gamma(X) T0)`.
    pub fn defect_of(&self, x: &VectorField) -> VectorField {
        let t = self.reeb().0;
        let ix = self.apply_i(x).0;
        let xf = x.0.clone();
        let g = self.gamma_field().clone();
        let th = self.theta_field().clone();
        let a = self.endo.0.clone();
        let d = self.dim();
        VectorField(fn_field(d, d, move |p, k| {
            let k1 = raise(k)?;
            let t1 = t.germ(p, k1)?;
            let ix1 = ix.germ(p, k1)?;
            let x1 = xf.germ(p, k1)?;
            let gk = g.germ(p, k)?;
            let tk: Vec<Jet> = t1.iter().map(|c| c.truncate(k)).collect();
            let ixk: Vec<Jet> = ix1.iter().map(|c| c.truncate(k)).collect();
            let xk: Vec<Jet> = x1.iter().map(|c| c.truncate(k)).collect();
            let first = geometry::add_germs(&bracket_germ(&t1, &ix1), &scale_germ(&contract1(&gk, &ixk), &tk));
            let inner = geometry::add_germs(&bracket_germ(&t1, &x1), &scale_germ(&contract1(&gk, &xk), &tk));
            let second = apply_matrix(&a.germ(p, k)?, &project_along(&th.germ(p, k)?, &tk, &inner));
            Ok(sub_germs(&first, &second))
        }))
    }

    pub fn sasaki_weyl_defect(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_horizontal(p, v)?;
        self.defect_of(&self.h_extension(v)).at(p)
    }

    /// Re-trivialization `s0 -> e^u s0`: `theta0 -> e^-u theta0`, `gamma -> gamma + du`.
    pub fn gauge_transform(&self, u: &Field) -> Result<CRWeylStructure> {
        let d = self.dim();
        let uf = u.clone();
        let factor = fn_field(d, 1, move |p, k| Ok(vec![(-&uf.germ(p, k)?[0]).exp()]));
        let theta0 = self.theta0.scaled(&factor);
        let gamma = self.gamma.add(&KForm::scalar(u.clone()).d()?)?;
        CRWeylStructure::new(self.chart.clone(), theta0, gamma, self.endo.clone())
    }

    pub fn with_gamma(&self, gamma: KForm) -> Result<CRWeylStructure> {
        CRWeylStructure::new(self.chart.clone(), self.theta0.clone(), gamma, self.endo.clone())
    }

    /// CR integrability vector and the H-valuedness residual for extensions of `u, v`.
    pub fn cr_integrability(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)> {
        let th = self.theta_field().clone();
        let d = self.dim();
        let ext = |w: Vec<f64>| {
            let th = th.clone();
            VectorField(fn_field(d, d, move |p, k| {
                let c: Vec<Jet> = geometry::lift(&Jet::constant(p.len(), k, 0.0), &w);
                project_orthogonal(&th.germ(p, k)?, &c)
            }))
        };
        let x = ext(u.to_vec());
        let y = ext(v.to_vec());
        let ix = self.endo.applied(&x);
        let iy = self.endo.applied(&y);
        let b1 = geometry::lie_bracket(&ix, &iy, p)?;
        let b2 = geometry::lie_bracket(&x, &y, p)?;
        let b3 = geometry::lie_bracket(&ix, &y, p)?;
        let b4 = geometry::lie_bracket(&x, &iy, p)?;
        let thp = th.at(p)?;
        let seed = Jet::constant(d, 0, 0.0);
        let inner = geometry::lift(&seed, &linalg::axpy(1.0, &b3, &b4));
        let inner_h = values(&project_orthogonal(&geometry::lift(&seed, &thp), &inner)?);
        let i_inner = self.endo.apply(p, &inner_h)?;
        let diff = linalg::sub(&b1, &b2);
        let n = linalg::sub(&diff, &i_inner);
        let hval = geometry::eval1(&thp, &diff);
        Ok((n, hval.abs()))
    }

    /// Checks every structural invariant at the given points.
    pub fn validate(&self, points: &[Vec<f64>], tol_scale: f64) -> ValidationReport {
        let mut theta_min = Min::default();
        let mut preserve = Max::default();
        let mut square = Max::default();
        let mut integ = Max::default();
        let mut hval = Max::default();
        let mut levi_min = Min::default();
        let mut levi_sym = Max::default();
        let mut reeb_res = Max::default();
        let mut errors: Vec<String> = Vec::new();
        for p in points {
            if let Err(e) = self.validate_point(
                p,
                [&mut theta_min, &mut levi_min],
                [&mut preserve, &mut square, &mut integ, &mut hval, &mut levi_sym, &mut reeb_res],
            ) {
                errors.push(e.to_string());
                for m in [&mut preserve, &mut square, &mut integ, &mut hval, &mut levi_sym, &mut reeb_res] {
                    m.push(f64::NAN);
                }
            }
        }
        let t = tol_scale;
        let mut checks = vec![
            Check::at_least("theta0-nonvanishing", theta_min.0, tolerance::NONVANISHING),
            Check::at_most("endo-preserves-h", preserve.0, tolerance::JET_EXACT * t),
            Check::at_most("endo-squares-to-minus-one", square.0, tolerance::JET_EXACT * t),
            Check::at_most("cr-integrability", integ.0, tolerance::JET_EXACT * t),
            Check::at_most("cr-bracket-h-valued", hval.0, tolerance::JET_EXACT * t),
            Check::at_most("levi-symmetry", levi_sym.0, tolerance::JET_EXACT * t),
            Check::at_least("pseudoconvexity", levi_min.0, tolerance::POSITIVITY),
            Check::at_most("reeb-equations", reeb_res.0, tolerance::JET_EXACT * t),
        ];
        if let Some(e) = errors.first() {
            checks.push(Check::failed("evaluation", e));
        }
        ValidationReport { checks }
    }

    fn validate_point(&self, p: &[f64], mins: [&mut Min; 2], maxes: [&mut Max; 6]) -> Result<()> {
        let [theta_min, levi_min] = mins;
        let [preserve, square, integ, hval, levi_sym, reeb_res] = maxes;
        let th = self.theta_field().at(p)?;
        theta_min.push(linalg::norm(&th));
        let frame = self.h_frame(p)?;
        if frame.len() != self.dim() - 1 {
            return Err(Error::Invalid("H does not have rank 2n".into()));
        }
        for v in &frame {
            let av = self.endo.apply(p, v)?;
            preserve.push(geometry::eval1(&th, &av).abs());
            let aav = self.endo.apply(p, &av)?;
            square.push(linalg::norm(&linalg::axpy(1.0, &aav, v)));
        }
        let dth = self.theta0.d()?;
        let m = frame.len();
        let mut gram = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let aj = self.endo.apply(p, &frame[j])?;
                gram[i][j] = 0.5 * dth.eval(p, &[&frame[i], &aj])?;
            }
        }
        for i in 0..m {
            for j in 0..m {
                levi_sym.push((gram[i][j] - gram[j][i]).abs());
            }
        }
        levi_min.push(linalg::min_eigenvalue(&gram));
        for (i, u) in frame.iter().enumerate() {
            for v in &frame[i + 1..] {
                let (n, h) = self.cr_integrability(p, u, v)?;
                integ.push(linalg::norm(&n));
                hval.push(h);
            }
        }
        let t = match self.reeb_field(p) {
            Ok(t) => t,
            Err(e) => {
                reeb_res.push(f64::NAN);
                return Err(e);
            }
        };
        reeb_res.push((geometry::eval1(&th, &t) - 1.0).abs());
        let beta = self.beta();
        for e in (0..self.dim()).map(|i| {
            let mut e = vec![0.0; self.dim()];
            e[i] = 1.0;
            e
        }) {
            reeb_res.push(beta.eval(p, &[&t, &e])?.abs());
        }
        Ok(())
    }
}

/// Solves the bordered system `[B^T th; th^T 0] (T, mu) = (0, 1)`.
pub fn reeb_solve(beta: &[Jet], theta: &[Jet]) -> Result<Vec<Jet>> {
    let d = theta.len();
    let zero = theta[0].zero_like();
    let mut a = vec![vec![zero.clone(); d + 1]; d + 1];
    for j in 0..d {
        for i in 0..d {
            // row j: sum_i T_i beta(e_i, e_j)
            a[j][i] = beta[i * d + j].clone();
        }
        a[j][d] = theta[j].clone();
        a[d][j] = theta[j].clone();
    }
    let mut b = vec![zero.clone(); d + 1];
    b[d] = zero.lift_const(1.0);
    let mut x = solve_jets(a, b, tolerance::PIVOT).map_err(|e| match e {
        Error::Singular(m) => Error::Singular(format!("Reeb system: {m}")),
        other => other,
    })?;
    x.truncate(d);
    Ok(x)
}

/// Shared handle for the derived scalar `gamma(V)` of a vector field.
pub fn pairing(form: &KForm, v: &VectorField) -> Field {
    let (w, x) = (form.field().expect("component form").clone(), v.0.clone());
    let n = form.nvars();
    fn_field(n, 1, move |p, k| Ok(vec![contract1(&w.germ(p, k)?, &x.germ(p, k)?)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example2() -> CRWeylStructure {
        let c = ["x1", "y1", "x2", "y2", "t"];
        let chart = Chart::new(&c, vec![-1.0; 5], vec![1.0, 1.0, 1.0, 1.0, 2.0]);
        let theta = KForm::parse_one_form(&c, &["-y1", "x1", "-y2", "x2", "-1"]).unwrap();
        let gamma = KForm::parse_one_form(&c, &["0"; 5]).unwrap();
        let endo = EndomorphismField::parse(
            &c,
            &[
                vec!["0", "-1", "0", "0", "0"],
                vec!["1", "0", "0", "0", "0"],
                vec!["0", "0", "0", "-1", "0"],
                vec!["0", "0", "1", "0", "0"],
                vec!["x1", "y1", "x2", "y2", "0"],
            ],
        )
        .unwrap();
        CRWeylStructure::new(chart, theta, gamma, endo).unwrap()
    }

    #[test]
    fn reeb_is_minus_dt() {
        let s = example2();
        let t = s.reeb_field(&[0.3, -0.2, 0.5, 0.1, 1.2]).unwrap();
        let expected = [0.0, 0.0, 0.0, 0.0, -1.0];
        assert!(t.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-14), "{t:?}");
    }

    #[test]
    fn levi_metric_is_euclidean() {
        let s = example2();
        let p = [1.0, 0.0, 0.0, 0.0, 1.0];
        let v = s.project_h_at(&p, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((s.levi_metric(&p, &v, &v).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(s.levi_metric(&p, &[0.0, 0.0, 0.0, 0.0, 1.0], &v), Err(Error::NotHorizontal { .. })));
    }

    #[test]
    fn example2_validates_and_is_sasaki() {
        let s = example2();
        let pts = vec![vec![0.3, -0.2, 0.5, 0.1, 1.2], vec![-0.7, 0.4, 0.2, 0.9, 0.4]];
        let r = s.validate(&pts, 1.0);
        assert!(r.pass(), "{:?}", r.checks);
        for p in &pts {
            for v in s.h_frame(p).unwrap() {
                let d = s.sasaki_weyl_defect(p, &v).unwrap();
                assert!(linalg::norm(&d) < 1e-12);
            }
        }
    }

    #[test]
    fn gauge_scales_reeb() {
        let s = example2();
        let c = s.chart.coords().to_vec();
        let u = geometry::parse_field(&c, &["log(2)"]).unwrap();
        let g = s.gauge_transform(&u).unwrap();
        let p = [0.3, -0.2, 0.5, 0.1, 1.2];
        let t0 = s.reeb_field(&p).unwrap();
        let t1 = g.reeb_field(&p).unwrap();
        assert!(t0.iter().zip(&t1).all(|(a, b)| (2.0 * a - b).abs() < 1e-14));
    }
}
