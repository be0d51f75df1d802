//! Seeded identity suites over a contact model.
//!
//! Each check evaluates one structural identity at reproducible sample points
//! and reports the worst violation against a pinned tolerance. Residual-style
//! checks pass when `value <= threshold * tolerance_scale`; magnitude-style
//! checks (nonvanishing cocycle) pass when `value >= threshold`. The suite
//! order and the sampling are fully determined by the seed, so two runs with
//! equal inputs produce identical reports.

use nalgebra::DVector;
use serde::Serialize;

use crate::contact::{
    bracket_via_fields, bracket_with_fd_inner, darboux_dform, darboux_form, jacobi_bracket,
    nondegeneracy, reeb_field, section_equivariance_residual, ContactModel, DarbouxFrame,
    SectionModel,
};
use crate::error::Result;
use crate::expr::{Env, Expr};
use crate::geometry::{Chart, ChartPoint};
use crate::sample::Lcg64;
use crate::symplectic::{omega, poisson_bracket_homogeneous, CoverPoint};

/// Direction of the pass condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// Pass when `value <= threshold` (scaled).
    Le,
    /// Pass when `value >= threshold`.
    Ge,
}

/// Outcome of one identity check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub passed: bool,
    pub samples: usize,
    pub detail: String,
}

/// Options for the identity suites.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub samples: usize,
    pub tolerance_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 42,
            samples: 100,
            tolerance_scale: 1.0,
        }
    }
}

struct Suite<'a> {
    model: &'a ContactModel,
    opts: &'a VerifyOptions,
    reports: Vec<CheckReport>,
}

impl<'a> Suite<'a> {
    fn push_le(&mut self, name: &str, value: f64, threshold: f64, samples: usize, detail: &str) {
        let scaled = threshold * self.opts.tolerance_scale;
        self.reports.push(CheckReport {
            name: name.to_string(),
            value,
            threshold: scaled,
            comparison: Comparison::Le,
            passed: value <= scaled,
            samples,
            detail: detail.to_string(),
        });
    }

    fn push_ge(&mut self, name: &str, value: f64, threshold: f64, samples: usize, detail: &str) {
        self.reports.push(CheckReport {
            name: name.to_string(),
            value,
            threshold,
            comparison: Comparison::Ge,
            passed: value >= threshold,
            samples,
            detail: detail.to_string(),
        });
    }

    fn rng(&self, salt: u64) -> Lcg64 {
        Lcg64::new(self.opts.seed.wrapping_add(salt.wrapping_mul(0x9e3779b97f4a7c15)))
    }
}

/// Run every applicable identity suite on the model (with an optional section
/// for the equivariance check). Reports come back in a fixed order.
pub fn run_identity_suites(
    model: &ContactModel,
    section: Option<&SectionModel>,
    opts: &VerifyOptions,
) -> Result<Vec<CheckReport>> {
    let mut suite = Suite {
        model,
        opts,
        reports: Vec::new(),
    };
    check_reeb(&mut suite)?;
    check_defining_equations(&mut suite)?;
    check_cartan(&mut suite)?;
    check_decay(&mut suite)?;
    check_nondegeneracy(&mut suite)?;
    check_brackets(&mut suite)?;
    check_omega_homogeneity(&mut suite)?;
    check_omega_exactness(&mut suite)?;
    check_weight_invariance(&mut suite)?;
    check_projection(&mut suite)?;
    check_poisson_closure(&mut suite)?;
    check_evolution_rescale(&mut suite)?;
    if !model.atlas.transitions.is_empty() {
        check_cocycle_defining(&mut suite)?;
        check_cocycle_nonvanishing(&mut suite)?;
        check_overlap_roundtrip(&mut suite)?;
        check_triple_cocycle(&mut suite)?;
        check_hamiltonian_compat(&mut suite)?;
        check_volume_scaling(&mut suite)?;
        check_field_invariance(&mut suite)?;
        if let Some(section) = section {
            check_section_equivariance(&mut suite, section)?;
        }
    }
    Ok(suite.reports)
}

fn sample_points(model: &ContactModel, rng: &mut Lcg64, count: usize) -> Vec<ChartPoint> {
    let mut points = Vec::with_capacity(count * model.atlas.charts.len());
    for chart in &model.atlas.charts {
        for _ in 0..count {
            points.push(ChartPoint::new(&chart.id, chart.sample_core(rng)));
        }
    }
    points
}

fn check_reeb(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(1);
    let mut worst: f64 = 0.0;
    let points = sample_points(suite.model, &mut rng, suite.opts.samples);
    for point in &points {
        let chart = suite.model.chart(&point.chart)?;
        let r = reeb_field(chart);
        let eta = darboux_form(chart, &point.coords);
        let deta = darboux_dform(chart);
        let pairing: f64 = eta.iter().zip(&r).map(|(a, b)| a * b).sum();
        worst = worst.max((pairing - 1.0).abs());
        for k in 0..chart.dim() {
            let c: f64 = (0..chart.dim()).map(|j| r[j] * deta[(j, k)]).sum();
            worst = worst.max(c.abs());
        }
    }
    suite.push_le(
        "reeb_defining",
        worst,
        1e-12,
        points.len(),
        "i_R eta = 1 and i_R d(eta) = 0 per chart",
    );
    Ok(())
}

/// Residuals of the defining equations of the contact field:
/// `i_X η = −Ĥ` and `i_X dη = dĤ − (∂Ĥ/∂z) η`.
fn check_defining_equations(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(2);
    let points = sample_points(suite.model, &mut rng, suite.opts.samples);
    let mut worst_eta: f64 = 0.0;
    let mut worst_deta: f64 = 0.0;
    for point in &points {
        let t = rng.uniform(-1.0, 1.0);
        let chart = suite.model.chart(&point.chart)?;
        let field = suite.model.contact_hvf(point, t)?;
        let jet = suite.model.hamiltonian_jet(point, t)?;
        let eta = darboux_form(chart, &point.coords);
        let deta = darboux_dform(chart);
        let zs = chart.z_slot();
        let hz = chart.sign(zs) * jet.gradient[zs];

        let pairing: f64 = eta.iter().zip(&field).map(|(a, b)| a * b).sum();
        worst_eta = worst_eta.max((pairing + jet.value).abs());

        for k in 0..chart.dim() {
            let contraction: f64 = (0..chart.dim()).map(|j| field[j] * deta[(j, k)]).sum();
            let rhs = jet.gradient[k] - hz * eta[k];
            worst_deta = worst_deta.max((contraction - rhs).abs());
        }
    }
    suite.push_le(
        "defining_eq_contraction",
        worst_eta,
        1e-9,
        points.len(),
        "i_X eta + H = 0",
    );
    suite.push_le(
        "defining_eq_differential",
        worst_deta,
        1e-9,
        points.len(),
        "i_X d(eta) - dH + H_z eta = 0",
    );
    Ok(())
}

/// Cartan identity `(d i_X + i_X d) η = −(∂Ĥ/∂z) η`, with `d(i_X η)` built
/// from exact derivatives of the contraction.
fn check_cartan(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(3);
    let points = sample_points(suite.model, &mut rng, suite.opts.samples);
    let mut worst: f64 = 0.0;
    for point in &points {
        let t = rng.uniform(-1.0, 1.0);
        let chart = suite.model.chart(&point.chart)?;
        let frame = DarbouxFrame::new(chart);
        let jet = frame.jet(
            suite.model.hamiltonian(&point.chart)?,
            &point.coords,
            t,
            &suite.model.parameters,
        )?;
        let field = frame.contact_field(&point.coords, &jet);
        let field_jac = frame.contact_field_jacobian(&point.coords, &jet);
        let p = frame.momenta(&point.coords);
        let n = frame.n();
        let hz = jet.grad[0];

        // all in role order: η = (1, −p, 0), dη(q_i, p_i) = 1
        // d(i_X η)_e = ∂_e(X_z − Σ p_i X_{q_i})
        for e in 0..frame.dim() {
            let mut d_contraction = field_jac[(0, e)];
            for i in 0..n {
                d_contraction -= p[i] * field_jac[(1 + i, e)];
                if e == n + 1 + i {
                    d_contraction -= field[1 + i];
                }
            }
            // (i_X dη)_e with dη = Σ dq_i ∧ dp_i in role order
            let mut contraction = 0.0;
            for i in 0..n {
                if e == n + 1 + i {
                    contraction += field[1 + i];
                }
                if e == 1 + i {
                    contraction -= field[n + 1 + i];
                }
            }
            let eta_e = if e == 0 {
                1.0
            } else if e <= n {
                -p[e - 1]
            } else {
                0.0
            };
            worst = worst.max((d_contraction + contraction + hz * eta_e).abs());
        }
    }
    suite.push_le(
        "cartan_lie_derivative",
        worst,
        1e-9,
        points.len(),
        "L_X eta = -(H_z) eta",
    );
    Ok(())
}

/// `L_X Ĥ = −(∂Ĥ/∂z)·Ĥ` at frozen time.
fn check_decay(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(4);
    let points = sample_points(suite.model, &mut rng, suite.opts.samples);
    let mut worst: f64 = 0.0;
    for point in &points {
        let t = rng.uniform(-1.0, 1.0);
        let chart = suite.model.chart(&point.chart)?;
        let field = suite.model.contact_hvf(point, t)?;
        let jet = suite.model.hamiltonian_jet(point, t)?;
        let zs = chart.z_slot();
        let hz = chart.sign(zs) * jet.gradient[zs];
        let directional: f64 = field
            .iter()
            .zip(jet.gradient.iter())
            .map(|(x, g)| x * g)
            .sum();
        worst = worst.max((directional + hz * jet.value).abs());
    }
    suite.push_le(
        "hamiltonian_decay",
        worst,
        1e-9,
        points.len(),
        "L_X H = -(H_z) H",
    );
    Ok(())
}

fn check_nondegeneracy(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(5);
    let points = sample_points(suite.model, &mut rng, suite.opts.samples);
    let n = suite.model.atlas.n();
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    let mut worst: f64 = 0.0;
    for point in &points {
        let chart = suite.model.chart(&point.chart)?;
        let vol = nondegeneracy(chart, &point.coords);
        worst = worst.max((vol.abs() - factorial).abs());
    }
    suite.push_le(
        "nondegeneracy_volume",
        worst,
        1e-9,
        points.len(),
        "|eta ^ (d eta)^n| = n! in every chart",
    );
    Ok(())
}

/// Random polynomial-trig test pair over the chart coordinates.
fn random_pair(rng: &mut Lcg64, coords: &[String]) -> (Expr, Expr) {
    let mut gen_one = |trig: bool| {
        let v = |rng: &mut Lcg64| Expr::var(&coords[rng.pick(coords.len())]);
        let c = |rng: &mut Lcg64| Expr::constant(rng.signed_magnitude(0.5, 2.0));
        let quad = Expr::mul(Expr::mul(c(rng), v(rng)), v(rng));
        let wave = if trig {
            Expr::Unary(crate::expr::UnaryOp::Sin, Box::new(v(rng)))
        } else {
            Expr::Unary(crate::expr::UnaryOp::Cos, Box::new(v(rng)))
        };
        let linear = Expr::mul(c(rng), v(rng));
        Expr::add(quad, Expr::add(Expr::mul(c(rng), wave), linear))
    };
    (gen_one(true), gen_one(false))
}

fn check_brackets(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(6);
    let model = suite.model;
    let per_pair = (suite.opts.samples / 5).max(10);
    let mut worst_equiv: f64 = 0.0;
    let mut worst_antisym: f64 = 0.0;
    let mut worst_jacobi: f64 = 0.0;
    let mut count = 0usize;

    for chart in &model.atlas.charts {
        for _ in 0..5 {
            let (f, g) = random_pair(&mut rng, &chart.coords);
            let (_, h) = random_pair(&mut rng, &chart.coords);
            for _ in 0..per_pair {
                let x = chart.sample_core(&mut rng);
                let t = 0.0;
                let params = &model.parameters;
                let direct = jacobi_bracket(chart, &f, &g, &x, t, params)?;
                let via = bracket_via_fields(chart, &f, &g, &x, t, params)?;
                worst_equiv = worst_equiv.max((direct - via).abs());

                let swapped = jacobi_bracket(chart, &g, &f, &x, t, params)?;
                worst_antisym = worst_antisym.max((direct + swapped).abs());

                // cyclic sum with FD-differentiated inner brackets
                let cyc = cyclic_jacobi_sum(chart, &f, &g, &h, &x, t, params)?;
                worst_jacobi = worst_jacobi.max(cyc.abs());
                count += 1;
            }
        }
    }
    suite.push_le(
        "bracket_equivalence",
        worst_equiv,
        1e-7,
        count,
        "Jacobi bracket equals i_[X_F, X_H] eta",
    );
    suite.push_le(
        "bracket_antisymmetry",
        worst_antisym,
        1e-12,
        count,
        "{F, H} + {H, F} = 0",
    );
    suite.push_le(
        "bracket_jacobi_identity",
        worst_jacobi,
        1e-5,
        count,
        "cyclic sum of nested brackets (FD inner derivatives)",
    );
    Ok(())
}

fn cyclic_jacobi_sum(
    chart: &Chart,
    f: &Expr,
    g: &Expr,
    h: &Expr,
    x: &[f64],
    t: f64,
    params: &Env,
) -> Result<f64> {
    let fd = 1e-5;
    let term = |a: &Expr, b: &Expr, c: &Expr, x: &[f64]| -> Result<f64> {
        let inner = |y: &[f64]| jacobi_bracket(chart, b, c, y, t, params);
        bracket_with_fd_inner(chart, a, inner, x, t, params, fd)
    };
    Ok(term(f, g, h, x)? + term(g, h, f, x)? + term(h, f, g, x)?)
}

fn cover_samples(
    model: &ContactModel,
    rng: &mut Lcg64,
    count: usize,
) -> Vec<CoverPoint> {
    let mut out = Vec::new();
    for chart in &model.atlas.charts {
        for _ in 0..count {
            let coords = chart.sample_core(rng);
            let s = rng.signed_magnitude(0.5, 2.0);
            out.push(CoverPoint::new(s, ChartPoint::new(&chart.id, coords)));
        }
    }
    out
}

/// Pullback of `ω` under the fiber scaling `h_λ(s, x) = (λs, x)` equals `λ·ω`.
fn check_omega_homogeneity(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(7);
    let covers = cover_samples(suite.model, &mut rng, suite.opts.samples.min(30));
    let lambdas = [-2.0, 0.5, 3.0];
    let mut worst: f64 = 0.0;
    for cover in &covers {
        let chart = suite.model.chart(&cover.point.chart)?;
        let base = omega(chart, cover.s, &cover.point.coords)?;
        for lambda in lambdas {
            let at_scaled = omega(chart, lambda * cover.s, &cover.point.coords)?;
            let dim = chart.dim() + 1;
            // pullback: row/column 0 scale by λ (d(λs) = λ ds)
            for j in 0..dim {
                for k in 0..dim {
                    let mut pulled = at_scaled[(j, k)];
                    if j == 0 {
                        pulled *= lambda;
                    }
                    if k == 0 {
                        pulled *= lambda;
                    }
                    worst = worst.max((pulled - lambda * base[(j, k)]).abs());
                }
            }
        }
    }
    suite.push_le(
        "omega_homogeneity",
        worst,
        1e-9,
        covers.len() * lambdas.len(),
        "pullback under fiber scaling equals lambda * omega",
    );
    Ok(())
}

/// `ω = d(i_∇ ω)` with the exterior derivative taken by central differences
/// of the contracted 1-form.
fn check_omega_exactness(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(8);
    let covers = cover_samples(suite.model, &mut rng, suite.opts.samples.min(30));
    let fd = 1e-5;
    let mut worst: f64 = 0.0;
    for cover in &covers {
        let chart = suite.model.chart(&cover.point.chart)?;
        let dim = chart.dim() + 1;
        // θ = i_∇ω with ∇ = s ∂_s: θ_k(s, x) = s * ω(e_s, e_k)
        let theta = |s: f64, coords: &[f64]| -> Result<DVector<f64>> {
            let m = omega(chart, s, coords)?;
            let mut th = DVector::zeros(dim);
            for k in 0..dim {
                th[k] = s * m[(0, k)];
            }
            Ok(th)
        };
        let shift = |j: usize, delta: f64| -> (f64, Vec<f64>) {
            let mut s = cover.s;
            let mut coords = cover.point.coords.clone();
            if j == 0 {
                s += delta;
            } else {
                coords[j - 1] += delta;
            }
            (s, coords)
        };
        let m = omega(chart, cover.s, &cover.point.coords)?;
        let mut partials: Vec<DVector<f64>> = Vec::with_capacity(dim);
        for j in 0..dim {
            let (sp, xp) = shift(j, fd);
            let (sm, xm) = shift(j, -fd);
            partials.push((theta(sp, &xp)? - theta(sm, &xm)?) / (2.0 * fd));
        }
        for j in 0..dim {
            for k in 0..dim {
                let dtheta = partials[j][k] - partials[k][j];
                worst = worst.max((dtheta - m[(j, k)]).abs());
            }
        }
    }
    suite.push_le(
        "omega_exactness",
        worst,
        1e-7,
        covers.len(),
        "omega = d(i_Euler omega) via finite differences",
    );
    Ok(())
}

/// The lifted Hamiltonian field is invariant under the fiber scaling.
fn check_weight_invariance(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(9);
    let covers = cover_samples(suite.model, &mut rng, suite.opts.samples.min(30));
    let lambdas = [-2.0, 0.5, 3.0];
    let mut worst: f64 = 0.0;
    for cover in &covers {
        let t = rng.uniform(-1.0, 1.0);
        let x = suite.model.symplectic_hvf(cover, t)?;
        for lambda in lambdas {
            let scaled = CoverPoint::new(lambda * cover.s, cover.point.clone());
            let y = suite.model.symplectic_hvf(&scaled, t)?;
            // pushforward under h_λ multiplies the fiber component by λ
            worst = worst.max((y[0] - lambda * x[0]).abs());
            for k in 1..x.len() {
                worst = worst.max((y[k] - x[k]).abs());
            }
        }
    }
    suite.push_le(
        "hvf_weight_invariance",
        worst,
        1e-9,
        covers.len() * lambdas.len(),
        "pushforward of X_H under fiber scaling equals X_H",
    );
    Ok(())
}

fn check_projection(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(10);
    let covers = cover_samples(suite.model, &mut rng, suite.opts.samples);
    let mut worst: f64 = 0.0;
    for cover in &covers {
        let t = rng.uniform(-1.0, 1.0);
        worst = worst.max(suite.model.projection_check(cover, t)?);
    }
    suite.push_le(
        "symplectic_projection",
        worst,
        1e-7,
        covers.len(),
        "base part of the linear-solve field equals the contact field",
    );
    Ok(())
}

/// Poisson bracket of two lifted Hamiltonians is 1-homogeneous and reduces
/// to the Jacobi bracket.
fn check_poisson_closure(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(11);
    let model = suite.model;
    let mut worst_homog: f64 = 0.0;
    let mut worst_reduction: f64 = 0.0;
    let mut count = 0usize;
    for chart in &model.atlas.charts {
        for _ in 0..3 {
            let (f, g) = random_pair(&mut rng, &chart.coords);
            for _ in 0..(suite.opts.samples / 5).max(5) {
                let coords = chart.sample_core(&mut rng);
                let s = rng.signed_magnitude(0.5, 2.0);
                let cover = CoverPoint::new(s, ChartPoint::new(&chart.id, coords.clone()));
                let pb = poisson_bracket_homogeneous(model, &f, &g, &cover, 0.0)?;
                for lambda in [0.5, 3.0, -2.0] {
                    let scaled = CoverPoint::new(lambda * s, cover.point.clone());
                    let pb_scaled = poisson_bracket_homogeneous(model, &f, &g, &scaled, 0.0)?;
                    worst_homog = worst_homog.max((pb_scaled - lambda * pb).abs());
                }
                let jb = jacobi_bracket(chart, &f, &g, &coords, 0.0, &model.parameters)?;
                worst_reduction = worst_reduction.max((pb / s - jb).abs());
                count += 1;
            }
        }
    }
    suite.push_le(
        "poisson_homogeneity",
        worst_homog,
        1e-7,
        count,
        "{sF, sG} is 1-homogeneous",
    );
    suite.push_le(
        "poisson_jacobi_reduction",
        worst_reduction,
        1e-7,
        count,
        "s^-1 {sF, sG} equals the Jacobi bracket",
    );
    Ok(())
}

/// Constant trivialization rescales leave `Ĥ·R` unchanged.
fn check_evolution_rescale(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(12);
    let model = suite.model;
    let g = Expr::constant(2.0);
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for chart in &model.atlas.charts {
        for _ in 0..suite.opts.samples.min(30) {
            let coords = chart.sample_core(&mut rng);
            let point = ChartPoint::new(&chart.id, coords);
            let (a, b) = model.evolution_diagnostic(&g, &point, 0.0)?;
            worst = worst.max((a - b).amax());
            count += 1;
        }
    }
    suite.push_le(
        "evolution_const_rescale",
        worst,
        1e-9,
        count,
        "H*R is invariant under constant trivialization rescales",
    );
    Ok(())
}

/// The defining equation of the cocycle: pullback of the target contact form
/// equals `c` times the source form.
fn check_cocycle_defining(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(13);
    let model = suite.model;
    let per_transition = 1000;
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for tr in &model.atlas.transitions {
        let src = model.chart(&tr.source)?;
        let tgt = model.chart(&tr.target)?;
        for _ in 0..per_transition {
            let x = tr.sample_overlap(&mut rng);
            let y = tr.apply(src, &x)?;
            let c = tr.cocycle_at(src, &x)?;
            let jac = tr.jacobian(src, &x)?;
            let eta_src = darboux_form(src, &x);
            let eta_tgt = darboux_form(tgt, &y);
            for j in 0..src.dim() {
                let mut pulled = 0.0;
                for k in 0..tgt.dim() {
                    pulled += eta_tgt[k] * jac[(k, j)];
                }
                worst = worst.max((pulled - c * eta_src[j]).abs());
            }
            count += 1;
        }
    }
    suite.push_le(
        "cocycle_defining_equation",
        worst,
        1e-9,
        count,
        "pullback of target eta equals cocycle times source eta",
    );
    Ok(())
}

fn check_cocycle_nonvanishing(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(14);
    let model = suite.model;
    let mut min_abs = f64::INFINITY;
    let mut count = 0usize;
    for tr in &model.atlas.transitions {
        let src = model.chart(&tr.source)?;
        for _ in 0..1000 {
            let x = tr.sample_overlap(&mut rng);
            min_abs = min_abs.min(tr.cocycle_at(src, &x)?.abs());
            count += 1;
        }
    }
    suite.push_ge(
        "cocycle_nonvanishing",
        min_abs,
        1e-12,
        count,
        "minimum |c| over sampled overlap points",
    );
    Ok(())
}

/// Source → target → source round trips return to the start whenever the
/// inverse transition covers the image.
fn check_overlap_roundtrip(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(15);
    let model = suite.model;
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for tr in &model.atlas.transitions {
        let src = model.chart(&tr.source)?;
        for _ in 0..suite.opts.samples {
            let x = tr.sample_overlap(&mut rng);
            let y = tr.apply(src, &x)?;
            let image = ChartPoint::new(&tr.target, y);
            let Ok(back) = model.atlas.transit(&image, &tr.source) else {
                continue;
            };
            for (a, b) in back.coords.iter().zip(&x) {
                worst = worst.max((a - b).abs());
            }
            count += 1;
        }
    }
    suite.push_le(
        "overlap_roundtrip",
        worst,
        1e-9,
        count,
        "forward-then-inverse composition is the identity",
    );
    Ok(())
}

/// `c_{γβ}(φ_{βα}(x)) · c_{βα}(x) = c_{γα}(x)` on triple overlaps.
fn check_triple_cocycle(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(16);
    let model = suite.model;
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for ab in &model.atlas.transitions {
        for bc in &model.atlas.transitions {
            if bc.source != ab.target || bc.target == ab.source {
                continue;
            }
            let src = model.chart(&ab.source)?;
            let mid = model.chart(&ab.target)?;
            for _ in 0..20 {
                let x = ab.sample_overlap(&mut rng);
                let y = ab.apply(src, &x)?;
                if !bc.covers(&y) {
                    continue;
                }
                let direct = match model.atlas.cocycle_at(&ab.source, &bc.target, &x) {
                    Ok(c) => c,
                    Err(_) => continue,
                };
                let chained = bc.cocycle_at(mid, &y)? * ab.cocycle_at(src, &x)?;
                worst = worst.max((chained - direct).abs());
                count += 1;
            }
        }
    }
    if count > 0 {
        suite.push_le(
            "cocycle_triple_product",
            worst,
            1e-9,
            count,
            "cocycle multiplicativity on triple overlaps",
        );
    }
    Ok(())
}

fn check_hamiltonian_compat(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(17);
    let worst = suite.model.hamiltonian_cocycle_residual(
        &mut rng,
        suite.opts.samples,
        &[0.0, 0.37, 1.0],
    )?;
    suite.push_le(
        "hamiltonian_cocycle_compat",
        worst,
        1e-9,
        suite.opts.samples * suite.model.atlas.transitions.len() * 3,
        "H_target(phi(x)) = c(x) H_source(x) on overlaps",
    );
    Ok(())
}

/// Volume form scales by `c^{n+1}` under transitions: the `dc ∧ η` terms die
/// against `η`, and the Jacobian determinant accounts for the rest.
fn check_volume_scaling(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(18);
    let model = suite.model;
    let n = model.atlas.n();
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for tr in &model.atlas.transitions {
        let src = model.chart(&tr.source)?;
        let tgt = model.chart(&tr.target)?;
        for _ in 0..suite.opts.samples {
            let x = tr.sample_overlap(&mut rng);
            let y = tr.apply(src, &x)?;
            let c = tr.cocycle_at(src, &x)?;
            let det = tr.jacobian(src, &x)?.determinant();
            let pulled = nondegeneracy(tgt, &y) * det;
            let scaled = c.powi(n as i32 + 1) * nondegeneracy(src, &x);
            worst = worst.max((pulled - scaled).abs());
            count += 1;
        }
    }
    suite.push_le(
        "volume_cocycle_scaling",
        worst,
        1e-9,
        count,
        "pullback volume equals c^(n+1) times source volume",
    );
    Ok(())
}

/// Chart invariance of the dynamics: the pushforward of the contact field
/// under a transition equals the field computed in the target chart from the
/// cocycle-transformed Hamiltonian.
fn check_field_invariance(suite: &mut Suite) -> Result<()> {
    let mut rng = suite.rng(19);
    let model = suite.model;
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for tr in &model.atlas.transitions {
        let src = model.chart(&tr.source)?;
        for _ in 0..suite.opts.samples {
            let x = tr.sample_overlap(&mut rng);
            let t = rng.uniform(-1.0, 1.0);
            let y = tr.apply(src, &x)?;
            let jac = tr.jacobian(src, &x)?;
            let field_src = model.contact_hvf(&ChartPoint::new(&tr.source, x.clone()), t)?;
            let field_tgt = model.contact_hvf(&ChartPoint::new(&tr.target, y), t)?;
            let src_vec = DVector::from_vec(field_src);
            let pushed = &jac * src_vec;
            for k in 0..field_tgt.len() {
                worst = worst.max((pushed[k] - field_tgt[k]).abs());
            }
            count += 1;
        }
    }
    suite.push_le(
        "field_chart_invariance",
        worst,
        1e-7,
        count,
        "pushforward of X under transitions matches the target-chart field",
    );
    Ok(())
}

fn check_section_equivariance(suite: &mut Suite, section: &SectionModel) -> Result<()> {
    let mut rng = suite.rng(20);
    let worst =
        section_equivariance_residual(suite.model, section, &mut rng, suite.opts.samples, 0.0)?;
    suite.push_le(
        "section_equivariance",
        worst,
        1e-9,
        suite.opts.samples * suite.model.atlas.transitions.len(),
        "S_target(q') = c S_source(q) on overlaps",
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::geometry::Atlas;
    use std::collections::BTreeMap;

    fn mobius_model() -> ContactModel {
        let atlas = Atlas::mobius();
        let mut hs = BTreeMap::new();
        hs.insert(
            "U".to_string(),
            parse("cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z").unwrap(),
        );
        let mut params = Env::new();
        params.insert("f".to_string(), 1.0);
        ContactModel::new(atlas, hs, params).unwrap()
    }

    #[test]
    fn mobius_suite_passes() {
        let model = mobius_model();
        let section = SectionModel {
            sections: [("U".to_string(), parse("cos(x/2)").unwrap())].into(),
        };
        let opts = VerifyOptions {
            seed: 42,
            samples: 40,
            tolerance_scale: 1.0,
        };
        let reports = run_identity_suites(&model, Some(&section), &opts).unwrap();
        assert!(reports.len() >= 15);
        for r in &reports {
            assert!(r.passed, "check {} failed: value {}", r.name, r.value);
        }
    }

    #[test]
    fn cocycle_violation_fails_exactly_one_identity() {
        let atlas = Atlas::mobius();
        let mut hs = BTreeMap::new();
        hs.insert("U".to_string(), parse("z^2").unwrap());
        let model = ContactModel::new(atlas, hs, Env::new()).unwrap();
        let opts = VerifyOptions {
            seed: 42,
            samples: 30,
            tolerance_scale: 1.0,
        };
        let reports = run_identity_suites(&model, None, &opts).unwrap();
        let compat = reports
            .iter()
            .find(|r| r.name == "hamiltonian_cocycle_compat")
            .unwrap();
        assert!(!compat.passed);
        let invariance = reports
            .iter()
            .find(|r| r.name == "field_chart_invariance")
            .unwrap();
        assert!(!invariance.passed);
        // the chart-local identities still hold
        for name in ["defining_eq_contraction", "bracket_equivalence"] {
            assert!(reports.iter().find(|r| r.name == name).unwrap().passed);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let model = mobius_model();
        let opts = VerifyOptions {
            seed: 7,
            samples: 20,
            tolerance_scale: 1.0,
        };
        let a = run_identity_suites(&model, None, &opts).unwrap();
        let b = run_identity_suites(&model, None, &opts).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }
}
