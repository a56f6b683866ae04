//! The cone `M x R_{>0}` over a CR-Weyl structure, with its almost complex
//! structure `J`, 2-form `Omega` and metric `g(u, v) = Omega(u, J v)`.
//!
//! Everything is written in the trivialization of the base: the cone
//! coordinate `sigma` is the fibre coordinate `t`. Vectors on the cone are
//! `(v_M, b)` with `b` the `d/d sigma` component.

use nalgebra::{DMatrix, DVector};

use crate::crweyl::{project_along, CRWeylStructure};
use crate::error::{Error, Result};
use crate::geometry::{
    self, add_germs, apply_matrix, bracket_germ, contract1, d1_germ, d2_values, fn_field, raise, scale_germ,
    values, Chart, EndomorphismField, Field, KForm, VectorField,
};
use crate::jet::Jet;
use crate::linalg::{self, solve_jets};
use crate::report::{Check, Max, Min};
use crate::tolerance;

pub const CONE_COORD: &str = "sigma";

#[derive(Clone)]
pub struct ConeSpace {
    pub base: CRWeylStructure,
    pub chart: Chart,
    /// `+1` for the cone structure, `-1` for the conjugate used as a control.
    pub j_sign: f64,
}

/// Base data re-expanded in cone variables.
pub struct BaseGerm {
    pub theta: Vec<Jet>,
    pub gamma: Vec<Jet>,
    pub reeb: Vec<Jet>,
    pub endo: Vec<Jet>,
    pub sigma: Jet,
}

impl ConeSpace {
    pub fn new(base: CRWeylStructure) -> ConeSpace {
        let d = base.dim();
        let mut coords = base.chart.coords().to_vec();
        coords.push(CONE_COORD.into());
        let (lo, hi) = base.chart.bounds();
        let mut lo = lo.to_vec();
        let mut hi = hi.to_vec();
        lo.push(0.5);
        hi.push(2.0);
        let bc = base.chart.clone();
        let chart = Chart::new(&coords, lo, hi)
            .with_constraint("base domain", move |p| bc.contains(&p[..d]))
            .with_constraint("sigma > 0", move |p| p[d] > 0.0);
        ConeSpace { base, chart, j_sign: 1.0 }
    }

    pub fn conjugate(&self) -> ConeSpace {
        ConeSpace { j_sign: -self.j_sign, ..self.clone() }
    }

    /// Dimension of the base.
    pub fn d(&self) -> usize {
        self.base.dim()
    }

    pub fn dim(&self) -> usize {
        self.base.dim() + 1
    }

    /// Promotes a base field to the cone; its germs ignore `sigma`.
    pub fn lift_base(&self, f: &Field) -> Field {
        let f = f.clone();
        let d = self.d();
        fn_field(d + 1, f.len(), move |p, k| {
            let seeds = Jet::seed(p, k);
            Ok(f.germ(&p[..d], k)?.iter().map(|c| c.compose(&seeds[..d])).collect())
        })
    }

    pub fn base_germ(&self, p: &[f64], k: usize) -> Result<BaseGerm> {
        let d = self.d();
        let seeds = Jet::seed(p, k);
        let up = |f: &Field| -> Result<Vec<Jet>> {
            Ok(f.germ(&p[..d], k)?.iter().map(|c| c.compose(&seeds[..d])).collect())
        };
        Ok(BaseGerm {
            theta: up(self.base.theta_field())?,
            gamma: up(self.base.gamma_field())?,
            reeb: up(&self.base.reeb().0)?,
            endo: up(&self.base.endo.0)?,
            sigma: seeds[d].clone(),
        })
    }

    /// `J v` at germ level.
    pub fn j_apply_germ(&self, b: &BaseGerm, v: &[Jet]) -> Vec<Jet> {
        let d = self.d();
        let t = &b.sigma;
        let vm = &v[..d];
        let a = contract1(&b.theta, vm);
        let vh = project_along(&b.theta, &b.reeb, vm);
        let g_vh = contract1(&b.gamma, &vh);
        let ivh = apply_matrix(&b.endo, &vh);
        let g_ivh = contract1(&b.gamma, &ivh);
        let g_t = contract1(&b.gamma, &b.reeb);
        let tg_t = t * &g_t;
        // J X for X in H
        let mut m = add_germs(&ivh, &scale_germ(&(t * &g_vh), &b.reeb));
        let mut last = -(&(&(t * t) * &(&g_vh * &g_t)) + &(t * &g_ivh));
        // + a J(T0), J(T0) = -d_sigma + t g(T0) (T0 - t g(T0) d_sigma)
        m = add_germs(&m, &scale_germ(&(&a * &tg_t), &b.reeb));
        last = &last - &(&a * &(&tg_t * &tg_t).add_scalar(1.0));
        // + b J(d_sigma), J(d_sigma) = T0 - t g(T0) d_sigma
        let bs = &v[d];
        m = add_germs(&m, &scale_germ(bs, &b.reeb));
        last = &last - &(bs * &tg_t);
        m.push(last);
        if self.j_sign < 0.0 {
            m.iter().map(|c| -c).collect()
        } else {
            m
        }
    }

    pub fn j_field(&self) -> EndomorphismField {
        let me = self.clone();
        let dd = self.dim();
        EndomorphismField(fn_field(dd, dd * dd, move |p, k| {
            let b = me.base_germ(p, k)?;
            let zero = b.sigma.zero_like();
            let mut out = vec![zero.clone(); dd * dd];
            for j in 0..dd {
                let mut e = vec![zero.clone(); dd];
                e[j] = zero.lift_const(1.0);
                for (i, c) in me.j_apply_germ(&b, &e).into_iter().enumerate() {
                    out[i * dd + j] = c;
                }
            }
            Ok(out)
        }))
    }

    /// The field `J X`.
    pub fn j_of(&self, x: &VectorField) -> VectorField {
        let me = self.clone();
        let x = x.0.clone();
        let dd = self.dim();
        VectorField(fn_field(dd, dd, move |p, k| {
            let b = me.base_germ(p, k)?;
            Ok(me.j_apply_germ(&b, &x.germ(p, k)?))
        }))
    }

    pub fn cone_complex_structure(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_point(p)?;
        let b = self.base_germ(p, 0)?;
        Ok(values(&self.j_apply_germ(&b, &geometry::lift(&b.sigma, v))))
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: p.len() });
        }
        if p[self.d()] <= 0.0 {
            return Err(Error::Domain("cone coordinate must be positive".into()));
        }
        Ok(())
    }

    /// `Omega = 1/2 d(sigma theta0) + sigma gamma ^ theta0`.
    pub fn cone_two_form(&self) -> KForm {
        let th = self.lift_base(self.base.theta_field());
        let ga = self.lift_base(self.base.gamma_field());
        let d = self.d();
        let dd = d + 1;
        KForm::from_field(
            2,
            fn_field(dd, dd * dd, move |p, k| {
                let th1 = th.germ(p, raise(k)?)?;
                let dth = d1_germ(&th1);
                let th0: Vec<Jet> = th1.iter().map(|c| c.truncate(k)).collect();
                let g = ga.germ(p, k)?;
                let t = Jet::variable(dd, k, d, p[d]);
                let zero = t.zero_like();
                let mut out = vec![zero.clone(); dd * dd];
                for i in 0..d {
                    for j in 0..d {
                        let w = &(&g[i] * &th0[j]) - &(&g[j] * &th0[i]);
                        out[i * dd + j] = &t * &(&dth[i * d + j].scale(0.5) + &w);
                    }
                    out[d * dd + i] = th0[i].scale(0.5);
                    out[i * dd + d] = th0[i].scale(-0.5);
                }
                Ok(out)
            }),
        )
    }

    pub fn cone_metric(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        let jv = self.cone_complex_structure(p, v)?;
        self.cone_two_form().eval(p, &[u, &jv])
    }

    /// `(X, -sigma gamma(X))` for a base vector `X`.
    pub fn horizontal_lift(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let d = self.d();
        let g = self.base.gamma_field().at(&p[..d])?;
        let mut v = x.to_vec();
        v.push(-p[d] * geometry::eval1(&g, x));
        Ok(v)
    }

    /// Horizontal lift of a base vector field.
    pub fn lift_field(&self, x: &VectorField) -> VectorField {
        let xf = self.lift_base(&x.0);
        let g = self.lift_base(self.base.gamma_field());
        let d = self.d();
        VectorField(fn_field(d + 1, d + 1, move |p, k| {
            let mut v = xf.germ(p, k)?;
            let gv = contract1(&g.germ(p, k)?, &v);
            let t = Jet::variable(d + 1, k, d, p[d]);
            v.push(-(&t * &gv));
            Ok(v)
        }))
    }

    pub fn reeb_lift(&self) -> VectorField {
        self.lift_field(&self.base.reeb())
    }

    pub fn d_sigma(&self) -> VectorField {
        let mut e = vec![0.0; self.dim()];
        e[self.d()] = 1.0;
        VectorField::constant(e)
    }

    /// `N(X, Y) = [JX, JY] - J([JX, Y] + [X, JY]) - [X, Y]`.
    pub fn nijenhuis(&self, p: &[f64], x: &VectorField, y: &VectorField) -> Result<Vec<f64>> {
        let dd = self.dim();
        let b = self.base_germ(p, 0)?;
        let x1 = x.germ(p, 1)?;
        let y1 = y.germ(p, 1)?;
        let jx = self.j_of(x).germ(p, 1)?;
        let jy = self.j_of(y).germ(p, 1)?;
        let a = values(&bracket_germ(&jx, &jy));
        let inner = add_germs(&bracket_germ(&jx, &y1), &bracket_germ(&x1, &jy));
        let jin = values(&self.j_apply_germ(&b, &inner));
        let c = values(&bracket_germ(&x1, &y1));
        Ok((0..dd).map(|i| a[i] - jin[i] - c[i]).collect())
    }

    /// `F^-(X, Y) = 1/2 (F(X, Y) - F(IX, IY))` on `H`.
    pub fn f_minus(&self, q: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
        let f = self.base.faraday()?;
        let ix = self.base.apply_i_at(q, x)?;
        let iy = self.base.apply_i_at(q, y)?;
        Ok(0.5 * (f.eval(q, &[x, y])? - f.eval(q, &[&ix, &iy])?))
    }

    /// Closed form of `N(X~, Y~)` for `X, Y` in `H`:
    /// `2 F^-(X, Y) sigma d_sigma + 2 F^-(IX, Y) sigma T0~`.
    pub fn nijenhuis_closed_form(&self, p: &[f64], x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let d = self.d();
        let q = &p[..d];
        self.base.check_horizontal(q, x)?;
        self.base.check_horizontal(q, y)?;
        let t = p[d];
        let ix = self.base.apply_i_at(q, x)?;
        let fxy = self.f_minus(q, x, y)?;
        let fixy = self.f_minus(q, &ix, y)?;
        let tl = self.horizontal_lift(p, &self.base.reeb_field(q)?)?;
        let mut v = linalg::scale(2.0 * fixy * t, &tl);
        v[d] += 2.0 * fxy * t;
        Ok(v)
    }

    /// Closed form of `N(X~, T0~)` for `X` in `H`:
    /// `sigma F(X, T0) d_sigma + sigma F(IX, T0) T0~ - lift(L(IX))`, with `L` the defect.
    pub fn nijenhuis_mixed_closed_form(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let d = self.d();
        let q = &p[..d];
        let t = p[d];
        let f = self.base.faraday()?;
        let tr = self.base.reeb_field(q)?;
        let ix = self.base.apply_i_at(q, x)?;
        let defect = self.base.defect_of(&self.base.apply_i(&self.base.h_extension(x))).at(q)?;
        let tl = self.horizontal_lift(p, &tr)?;
        let mut v = linalg::scale(t * f.eval(q, &[&ix, &tr])?, &tl);
        v[d] += t * f.eval(q, &[x, &tr])?;
        let dl = self.horizontal_lift(p, &defect)?;
        Ok(linalg::sub(&v, &dl))
    }

    /// Max over points and coordinate directions of
    /// `|-(2 sigma d sigma + 2 sigma^2 gamma)(J v) - 2 sigma theta0(v)|`.
    pub fn jpotential_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let d = self.d();
        let mut m = Max::default();
        for p in points {
            let t = p[d];
            let g = self.base.gamma_field().at(&p[..d])?;
            let th = self.base.theta_field().at(&p[..d])?;
            for i in 0..=d {
                let mut e = vec![0.0; d + 1];
                e[i] = 1.0;
                let je = self.cone_complex_structure(p, &e)?;
                let phi = 2.0 * t * je[d] + 2.0 * t * t * geometry::eval1(&g, &je[..d]);
                let rhs = if i < d { 2.0 * t * th[i] } else { 0.0 };
                m.push((-phi - rhs).abs());
            }
        }
        Ok(m.0)
    }

    /// Cone-side checks that do not need the l.c.K. machinery: `J^2 = -1`,
    /// J-invariance of `Omega`, the metric splitting and positivity.
    pub fn metric_checks(&self, points: &[Vec<f64>], tol_scale: f64) -> Result<Vec<Check>> {
        let d = self.d();
        let dd = d + 1;
        let omega = self.cone_two_form();
        let (mut jj, mut inv, mut sym, mut orth, mut half, mut lev) =
            (Max::default(), Max::default(), Max::default(), Max::default(), Max::default(), Max::default());
        let mut pos = Min::default();
        for p in points {
            let q = &p[..d];
            let t = p[d];
            let ja = self.j_field().0.at(p)?;
            let apply = |v: &[f64]| -> Vec<f64> { (0..dd).map(|i| (0..dd).map(|j| ja[i * dd + j] * v[j]).sum()).collect() };
            let om = omega.field().expect("components").at(p)?;
            let basis: Vec<Vec<f64>> = (0..dd)
                .map(|i| {
                    let mut e = vec![0.0; dd];
                    e[i] = 1.0;
                    e
                })
                .collect();
            let g = |u: &[f64], v: &[f64]| geometry::eval2(&om, u, &apply(v));
            let mut gram = vec![vec![0.0; dd]; dd];
            for (i, u) in basis.iter().enumerate() {
                let ju = apply(u);
                jj.push(linalg::norm(&linalg::axpy(1.0, &apply(&ju), u)));
                for (j, v) in basis.iter().enumerate() {
                    let jv = apply(v);
                    inv.push((geometry::eval2(&om, &ju, &jv) - geometry::eval2(&om, u, v)).abs());
                    gram[i][j] = g(u, v);
                }
            }
            for i in 0..dd {
                for j in 0..dd {
                    sym.push((gram[i][j] - gram[j][i]).abs());
                }
            }
            pos.push(linalg::min_eigenvalue(&gram));
            let tr = self.base.reeb_field(q)?;
            let tl = self.horizontal_lift(p, &tr)?;
            let ds = &basis[d];
            half.push((g(&tl, &tl) - 0.5).abs());
            half.push((g(ds, ds) - 0.5).abs());
            orth.push(g(&tl, ds).abs());
            let frame: Vec<Vec<f64>> = self
                .base
                .h_frame(q)?
                .iter()
                .map(|v| self.base.project_h_at(q, v))
                .collect::<Result<_>>()?;
            for (a, x) in frame.iter().enumerate() {
                let xl = self.horizontal_lift(p, x)?;
                orth.push(g(&xl, &tl).abs());
                orth.push(g(&xl, ds).abs());
                orth.push(g(&tl, &xl).abs());
                orth.push(g(ds, &xl).abs());
                for y in &frame[a..] {
                    let yl = self.horizontal_lift(p, y)?;
                    let expected = t * self.base.levi_metric(q, x, y)?;
                    lev.push((g(&xl, &yl) - expected).abs());
                }
            }
        }
        let s = tol_scale;
        Ok(vec![
            Check::at_most("cone-j-squared", jj.0, tolerance::JET_EXACT * s),
            Check::at_most("omega-j-invariant", inv.0, tolerance::JET_EXACT * s),
            Check::at_most("metric-symmetric", sym.0, tolerance::JET_EXACT * s),
            Check::at_most("metric-splitting-orthogonal", orth.0, tolerance::JET_EXACT * s),
            Check::at_most("metric-reeb-and-sigma-half", half.0, tolerance::ROUNDING * s),
            Check::at_most("metric-on-h-is-sigma-levi", lev.0, tolerance::JET_EXACT * s),
            Check::at_least("metric-positive", pos.0, tolerance::POSITIVITY),
        ])
    }

    /// `dOmega - (sigma F ^ theta0 - 2 Omega ^ gamma)` on coordinate triples.
    pub fn domega_identity_residual(&self, p: &[f64]) -> Result<f64> {
        let d = self.d();
        let dd = d + 1;
        let om = self.cone_two_form();
        let dom = d2_values(&om.germ(p, 1)?, dd);
        let omv = om.field().expect("components").at(p)?;
        let q = &p[..d];
        let f = self.base.faraday()?.field().expect("components").at(q)?;
        let th = self.base.theta_field().at(q)?;
        let g = self.base.gamma_field().at(q)?;
        let t = p[d];
        let ext = |w: &[f64]| -> Vec<f64> {
            let mut o = w.to_vec();
            o.push(0.0);
            o
        };
        let (th, g) = (ext(&th), ext(&g));
        let fc = |i: usize, j: usize| if i < d && j < d { f[i * d + j] } else { 0.0 };
        let om2 = |i: usize, j: usize| omv[i * dd + j];
        let mut m = Max::default();
        for i in 0..dd {
            for j in i + 1..dd {
                for k in j + 1..dd {
                    let lhs = dom[(i * dd + j) * dd + k];
                    let ft = fc(i, j) * th[k] + fc(j, k) * th[i] + fc(k, i) * th[j];
                    let og = om2(i, j) * g[k] + om2(j, k) * g[i] + om2(k, i) * g[j];
                    m.push((lhs - (t * ft - 2.0 * og)).abs());
                }
            }
        }
        Ok(m.0)
    }

    /// Scalar `kappa` with `F = kappa (d theta0 + gamma ^ theta0)` on `H`, by
    /// least squares over pairs of the projected coordinate frame, as a base field.
    pub fn kappa_field(&self) -> Field {
        let base = self.base.clone();
        let d = self.d();
        fn_field(d, 1, move |p, k| {
            let beta = base.beta().germ(p, k)?;
            let f = base.faraday()?.germ(p, k)?;
            let th = base.theta_field().germ(p, k)?;
            let tr = base.reeb().germ(p, k)?;
            let zero = th[0].zero_like();
            let frame: Vec<Vec<Jet>> = (0..d)
                .map(|i| {
                    let mut e = vec![zero.clone(); d];
                    e[i] = zero.lift_const(1.0);
                    project_along(&th, &tr, &e)
                })
                .collect();
            let (mut num, mut den) = (zero.clone(), zero.clone());
            for i in 0..d {
                for j in i + 1..d {
                    let b = geometry::contract2(&beta, &frame[i], &frame[j]);
                    let fv = geometry::contract2(&f, &frame[i], &frame[j]);
                    num = &num + &(&fv * &b);
                    den = &den + &(&b * &b);
                }
            }
            if den.value() < tolerance::SINGULAR {
                return Err(Error::Singular("d theta0 degenerate on H".into()));
            }
            Ok(vec![num.div(&den)?])
        })
    }

    /// Lee form `L` solving `dOmega = Omega ^ L` by jet least squares, as a cone field.
    pub fn lee_field(&self) -> Field {
        let om = self.cone_two_form().field().expect("components").clone();
        let dd = self.dim();
        fn_field(dd, dd, move |p, k| {
            let w1 = om.germ(p, raise(k)?)?;
            let w: Vec<Jet> = w1.iter().map(|c| c.truncate(k)).collect();
            // dOmega components as jets of order k
            let grads: Vec<Vec<Jet>> = w1.iter().map(|c| (0..dd).map(|i| c.partial(i)).collect()).collect();
            let zero = w[0].zero_like();
            let mut rows: Vec<Vec<Jet>> = Vec::new();
            let mut rhs: Vec<Jet> = Vec::new();
            for i in 0..dd {
                for j in i + 1..dd {
                    for l in j + 1..dd {
                        let dom = &(&grads[j * dd + l][i] + &grads[l * dd + i][j]) + &grads[i * dd + j][l];
                        let mut row = vec![zero.clone(); dd];
                        row[l] = &row[l] + &w[i * dd + j];
                        row[i] = &row[i] + &w[j * dd + l];
                        row[j] = &row[j] + &w[l * dd + i];
                        rows.push(row);
                        rhs.push(dom);
                    }
                }
            }
            let normal: Vec<Vec<Jet>> = (0..dd)
                .map(|a| (0..dd).map(|b| rows.iter().fold(zero.clone(), |acc, r| &acc + &(&r[a] * &r[b]))).collect())
                .collect();
            let nv: Vec<Vec<f64>> = normal.iter().map(|r| values(r)).collect();
            if linalg::min_singular_value(&nv) < tolerance::SINGULAR {
                return Err(Error::Singular("wedge with Omega not injective".into()));
            }
            let b: Vec<Jet> =
                (0..dd).map(|a| rows.iter().zip(&rhs).fold(zero.clone(), |acc, (r, y)| &acc + &(&r[a] * y))).collect();
            solve_jets(normal, b, tolerance::PIVOT)
        })
    }

    /// Residual of `dOmega = Omega ^ L` at `p` for the least-squares `L`.
    pub fn lee_residual(&self, p: &[f64]) -> Result<f64> {
        let dd = self.dim();
        let om = self.cone_two_form();
        let dom = d2_values(&om.germ(p, 1)?, dd);
        let w = om.field().expect("components").at(p)?;
        let l = self.lee_field().at(p)?;
        let mut m = Max::default();
        for i in 0..dd {
            for j in i + 1..dd {
                for k in j + 1..dd {
                    let ol = w[i * dd + j] * l[k] + w[j * dd + k] * l[i] + w[k * dd + i] * l[j];
                    m.push((dom[(i * dd + j) * dd + k] - ol).abs());
                }
            }
        }
        Ok(m.0)
    }

    /// Runs the l.c.K. battery. The cone-side verdict uses only `J`, `Omega`
    /// and the Lee form; the base-side criterion uses the defect and `F`.
    pub fn lck_check(&self, points: &[Vec<f64>], tol_scale: f64) -> LckCertificate {
        let s = tol_scale;
        let mut c = Acc::default();
        let mut errors = Vec::new();
        for p in points {
            if let Err(e) = self.lck_point(p, &mut c) {
                errors.push(e.to_string());
                c.poison();
            }
        }
        let cone_checks = vec![
            Check::at_most("nijenhuis", c.nijenhuis.0, tolerance::JET_CHAIN * s),
            Check::at_most("lee-factorization", c.lee_solve.0, tolerance::JET_CHAIN * s),
            Check::at_most("lee-closed", c.lee_closed.0, tolerance::JET_CHAIN * s),
            Check::at_least("hermitian-metric-positive", c.metric_min.0, tolerance::POSITIVITY),
        ];
        let mut base_checks = vec![
            Check::at_most("sasaki-weyl-defect", c.defect.0, tolerance::JET_CHAIN * s),
            Check::at_most("faraday-factorization", c.factor.0, tolerance::JET_CHAIN * s),
            Check::at_most("faraday-reeb-contraction", c.reeb_contr.0, tolerance::JET_CHAIN * s),
            Check::at_most("kappa-sigma-independent", c.kappa_spread.0, tolerance::JET_CHAIN * s),
            Check::at_most("kappa-bianchi", c.bianchi.0, tolerance::JET_CHAIN * s),
        ];
        let mut plumbing = vec![
            Check::at_most("domega-identity", c.domega.0, tolerance::JET_EXACT * s),
            Check::at_most("lee-convention", c.lee_convention.0, tolerance::JET_CHAIN * s),
        ];
        if c.kahler_points > 0 {
            plumbing.push(Check::at_most("global-kahler-rescaling", c.kahler.0, tolerance::JET_CHAIN * s));
        }
        // the criterion presupposes an integrable CR base
        let bpts: Vec<Vec<f64>> = points.iter().map(|p| p[..self.d()].to_vec()).collect();
        match self.base.validate(&bpts, s).get("cr-integrability") {
            Some(chk) => base_checks.insert(0, chk.clone()),
            None => base_checks.insert(0, Check::failed("cr-integrability", "base validation did not run")),
        }
        if let Some(e) = errors.first() {
            base_checks.push(Check::failed("evaluation", e));
        }
        LckCertificate {
            kappa_min: c.kappa_min.0,
            kappa_max: c.kappa_max.0,
            kahler_locus_fraction: c.kahler_points as f64 / points.len().max(1) as f64,
            cone_checks,
            base_checks,
            plumbing,
        }
    }

    fn lck_point(&self, p: &[f64], c: &mut Acc) -> Result<()> {
        let d = self.d();
        let q = &p[..d];
        let frame: Vec<Vec<f64>> =
            self.base.h_frame(q)?.iter().map(|v| self.base.project_h_at(q, v)).collect::<Result<_>>()?;
        // cone side
        let lifts: Vec<VectorField> = frame.iter().map(|v| self.lift_field(&self.base.h_extension(v))).collect();
        let mut cone_fields = lifts.clone();
        cone_fields.push(self.reeb_lift());
        cone_fields.push(self.d_sigma());
        for i in 0..cone_fields.len() {
            for j in i + 1..cone_fields.len() {
                c.nijenhuis.push(linalg::norm(&self.nijenhuis(p, &cone_fields[i], &cone_fields[j])?));
            }
        }
        c.lee_solve.push(self.lee_residual(p)?);
        let dd = d + 1;
        let ja = self.j_field().0.at(p)?;
        let om = self.cone_two_form().field().expect("components").at(p)?;
        let gram: Vec<Vec<f64>> =
            (0..dd).map(|i| (0..dd).map(|j| (0..dd).map(|k| om[i * dd + k] * ja[k * dd + j]).sum()).collect()).collect();
        c.metric_min.push(linalg::min_eigenvalue(&gram));
        let lee = KForm::one_form(self.lee_field());
        let dl = lee.d()?.field().expect("components").at(p)?;
        c.lee_closed.push(linalg::max_abs(&dl));
        c.domega.push(self.domega_identity_residual(p)?);
        // base side
        for v in &frame {
            c.defect.push(linalg::norm(&self.base.sasaki_weyl_defect(q, v)?));
        }
        let kappa = self.kappa_field();
        let k0 = kappa.at(q)?[0];
        c.kappa_min.push(k0);
        c.kappa_max.0 = c.kappa_max.0.max(k0);
        let f = self.base.faraday()?;
        let beta = self.base.beta();
        for (i, u) in frame.iter().enumerate() {
            for v in &frame[i + 1..] {
                c.factor.push((f.eval(q, &[u, v])? - k0 * beta.eval(q, &[u, v])?).abs());
            }
        }
        let tr = self.base.reeb_field(q)?;
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            c.reeb_contr.push(f.eval(q, &[&tr, &e])?.abs());
        }
        // D(k) + k^2 eta = dk - k gamma + k^2 theta0
        let kg = kappa.germ(q, 1)?[0].gradient();
        let g = self.base.gamma_field().at(q)?;
        let th = self.base.theta_field().at(q)?;
        for i in 0..d {
            c.bianchi.push((kg[i] - k0 * g[i] + k0 * k0 * th[i]).abs());
        }
        // kappa recovered from the Lee form at several sigma, L = 2 kappa theta0 - 2 gamma
        let gt = geometry::eval1(&g, &tr);
        for sigma in SIGMA_PROBES {
            let mut ps = q.to_vec();
            ps.push(sigma);
            let l = self.lee_field().at(&ps)?;
            let lt = geometry::eval1(&l[..d], &tr);
            let ks = 0.5 * (lt + 2.0 * gt);
            c.kappa_spread.push((ks - k0).abs());
            for i in 0..d {
                c.lee_convention.push((l[i] - (2.0 * k0 * th[i] - 2.0 * g[i])).abs());
            }
            c.lee_convention.push(l[d].abs());
        }
        if k0.abs() > tolerance::SINGULAR {
            c.kahler_points += 1;
            let kc = self.lift_base(&kappa);
            let k2 = fn_field(d + 1, 1, move |p, k| {
                let v = kc.germ(p, k)?;
                Ok(vec![&v[0] * &v[0]])
            });
            let resc = self.cone_two_form().scaled(&k2);
            let dr = d2_values(&resc.germ(p, 1)?, d + 1);
            let mut m = 0.0f64;
            for i in 0..=d {
                for j in 0..=d {
                    for k in 0..=d {
                        m = m.max(dr[(i * (d + 1) + j) * (d + 1) + k].abs());
                    }
                }
            }
            c.kahler.push(m);
        }
        Ok(())
    }
}

/// Cone coordinates at which `kappa` is recovered to test sigma-independence.
pub const SIGMA_PROBES: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Default)]
struct Acc {
    nijenhuis: Max,
    lee_solve: Max,
    lee_closed: Max,
    domega: Max,
    defect: Max,
    factor: Max,
    reeb_contr: Max,
    bianchi: Max,
    kappa_spread: Max,
    lee_convention: Max,
    kahler: Max,
    kappa_min: Min,
    kappa_max: Max,
    metric_min: Min,
    kahler_points: usize,
}

impl Acc {
    fn poison(&mut self) {
        self.metric_min.push(f64::NAN);
        for m in [
            &mut self.nijenhuis,
            &mut self.lee_solve,
            &mut self.lee_closed,
            &mut self.domega,
            &mut self.defect,
            &mut self.factor,
            &mut self.reeb_contr,
            &mut self.bianchi,
            &mut self.kappa_spread,
        ] {
            m.push(f64::NAN);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LckCertificate {
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// Fraction of sampled points with `kappa != 0`.
    pub kahler_locus_fraction: f64,
    /// Intrinsic l.c.K. conditions on the cone.
    pub cone_checks: Vec<Check>,
    /// Sasaki-Weyl and curvature conditions on the base.
    pub base_checks: Vec<Check>,
    /// Identities that hold for every structure.
    pub plumbing: Vec<Check>,
}

impl LckCertificate {
    pub fn cone_is_lck(&self) -> bool {
        self.cone_checks.iter().all(|c| c.pass)
    }

    pub fn criterion_holds(&self) -> bool {
        self.base_checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.cone_checks.iter().chain(&self.base_checks).chain(&self.plumbing).find(|c| c.name == name)
    }

    pub fn all_checks(&self) -> Vec<Check> {
        self.cone_checks.iter().chain(&self.base_checks).chain(&self.plumbing).cloned().collect()
    }
}

/// Least-squares solution of an f64 system, for hand checks in tests.
pub fn lstsq(rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let b = DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14).expect("svd solve").iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use rand::SeedableRng;

    fn points(c: &ConeSpace, n: usize) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        c.chart.sample(&mut rng, n).unwrap()
    }

    #[test]
    fn flat_cone_formulas() {
        let c = ConeSpace::new(catalog::example2_structure(2).unwrap());
        let p = [0.3, -0.2, 0.5, 0.1, 1.2, 1.7];
        let js = c.cone_complex_structure(&p, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(linalg::norm(&linalg::sub(&js, &[0.0, 0.0, 0.0, 0.0, -1.0, 0.0])) < 1e-14);
        for v in c.base.h_frame(&p[..5]).unwrap() {
            let mut cv = v.clone();
            cv.push(0.0);
            let jv = c.cone_complex_structure(&p, &cv).unwrap();
            let mut iv = c.base.apply_i_at(&p[..5], &v).unwrap();
            iv.push(0.0);
            assert!(linalg::norm(&linalg::sub(&jv, &iv)) < 1e-14);
        }
    }

    #[test]
    fn example1_j_of_d_sigma() {
        let base = catalog::example1(&catalog::example2_structure(2).unwrap(), "1").unwrap();
        let c = ConeSpace::new(base);
        let p = [0.3, -0.2, 0.5, 0.1, 1.2, 1.7];
        let js = c.cone_complex_structure(&p, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        // T0 - sigma d_sigma with T0 = -d_t
        assert!(linalg::norm(&linalg::sub(&js, &[0.0, 0.0, 0.0, 0.0, -1.0, -1.7])) < 1e-14);
    }

    #[test]
    fn metric_checks_pass_on_example2_and_example1() {
        for base in [
            catalog::example2_structure(2).unwrap(),
            catalog::example1(&catalog::example2_structure(2).unwrap(), "1").unwrap(),
        ] {
            let c = ConeSpace::new(base);
            let pts = points(&c, 5);
            for ch in c.metric_checks(&pts, 1.0).unwrap() {
                assert!(ch.pass, "{ch:?}");
            }
            assert!(c.jpotential_residual(&pts).unwrap() < 1e-12);
            assert!(c.conjugate().jpotential_residual(&pts).unwrap() > 1e-3);
        }
    }

    #[test]
    fn closed_forms_match_brackets() {
        // a perturbation with nonzero F^- and F(., T0)
        let base = catalog::example2_structure(2).unwrap().with_gamma(
            KForm::parse_one_form(&catalog::example2_coords(2), &["y2", "x1*x2", "0", "sin(x1)", "x2*y1"]).unwrap(),
        );
        let c = ConeSpace::new(base.unwrap());
        for p in points(&c, 4) {
            let q = &p[..5];
            let frame: Vec<Vec<f64>> =
                c.base.h_frame(q).unwrap().iter().map(|v| c.base.project_h_at(q, v).unwrap()).collect();
            for (i, x) in frame.iter().enumerate() {
                let xl = c.lift_field(&c.base.h_extension(x));
                for y in &frame[i + 1..] {
                    let yl = c.lift_field(&c.base.h_extension(y));
                    let n = c.nijenhuis(&p, &xl, &yl).unwrap();
                    let cf = c.nijenhuis_closed_form(&p, x, y).unwrap();
                    assert!(linalg::norm(&linalg::sub(&n, &cf)) < 1e-9, "{n:?} vs {cf:?}");
                }
                let nm = c.nijenhuis(&p, &xl, &c.reeb_lift()).unwrap();
                let cm = c.nijenhuis_mixed_closed_form(&p, x).unwrap();
                assert!(linalg::norm(&linalg::sub(&nm, &cm)) < 1e-9, "{nm:?} vs {cm:?}");
            }
        }
    }

    #[test]
    fn example1_is_globally_conformal_kahler() {
        let base = catalog::example1(&catalog::example2_structure(2).unwrap(), "1").unwrap();
        let c = ConeSpace::new(base);
        let cert = c.lck_check(&points(&c, 3), 1.0);
        for ch in cert.all_checks() {
            assert!(ch.pass, "{ch:?}");
        }
        assert!((cert.kappa_min - 1.0).abs() < 1e-9 && (cert.kappa_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn biconditional_on_controls() {
        let e2 = catalog::example2_structure(2).unwrap();
        let cases = [
            ("example2", e2.clone(), true),
            ("example1", catalog::example1(&e2, "1").unwrap(), true),
            ("example1-x1", catalog::example1(&e2, "x1").unwrap(), false),
            ("broken", catalog::example2_broken(2).unwrap(), false),
            ("nonfactor", catalog::example2_nonfactor(2).unwrap(), false),
        ];
        for (name, base, lck) in cases {
            let c = ConeSpace::new(base);
            let t = std::time::Instant::now();
            let cert = c.lck_check(&points(&c, 3), 1.0);
            eprintln!("{name}: {:?}", t.elapsed());
            for ch in cert.all_checks() {
                eprintln!("  {} {:.3e} {}", ch.name, ch.max_residual, ch.pass);
            }
            assert_eq!(cert.cone_is_lck(), lck, "{name}");
            assert_eq!(cert.criterion_holds(), lck, "{name}");
            assert!(cert.get("domega-identity").unwrap().pass, "{name}");
        }
    }
}
