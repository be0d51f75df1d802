//! Contact forms, Reeb fields, contact Hamiltonian vector fields, the
//! contact Jacobi bracket, and Legendre submanifolds.
//!
//! Everything here is chart-local. In Darboux role values the contact form is
//! `η = dz − p_i dq^i` and the contact Hamiltonian vector field of a reduced
//! Hamiltonian `Ĥ(z, q, p, t)` is
//!
//! ```text
//! q̇^i = ∂Ĥ/∂p_i
//! ṗ_i = −∂Ĥ/∂q^i − p_i ∂Ĥ/∂z
//! ż   = p_i ∂Ĥ/∂p_i − Ĥ
//! ```
//!
//! The per-chart reduced Hamiltonians of a [`ContactModel`] must transform by
//! the atlas cocycle on overlaps (`Ĥ_target ∘ φ = c · Ĥ_source`); that is what
//! makes the family a single global Hamiltonian of the structure even when no
//! global contact form exists. The Reeb field is deliberately exposed per
//! chart only: for non-trivializable structures the chart Reeb fields do not
//! assemble into a global object.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::geometry::{Atlas, Chart, ChartPoint};
use crate::jet::{jet2, Jet2};

/// Atlas plus per-chart reduced Hamiltonians and numeric parameters.
#[derive(Debug, Clone)]
pub struct ContactModel {
    pub atlas: Atlas,
    pub hamiltonians: BTreeMap<String, Expr>,
    pub parameters: Env,
}

impl ContactModel {
    /// Build and validate: every chart needs a Hamiltonian whose free
    /// variables are chart coordinates, `t`, or declared parameters.
    pub fn new(
        atlas: Atlas,
        hamiltonians: BTreeMap<String, Expr>,
        parameters: Env,
    ) -> Result<ContactModel> {
        atlas.validate()?;
        for name in parameters.keys() {
            if name == "t" {
                return Err(Error::Model("parameter name 't' is reserved".into()));
            }
        }
        for chart in &atlas.charts {
            let expr = hamiltonians.get(&chart.id).ok_or_else(|| {
                Error::Model(format!("no Hamiltonian for chart '{}'", chart.id))
            })?;
            check_chart_expr(chart, expr, &parameters, "Hamiltonian")?;
            if parameters.keys().any(|p| chart.coords.contains(p)) {
                return Err(Error::Model(format!(
                    "parameter shadows a coordinate of chart '{}'",
                    chart.id
                )));
            }
        }
        Ok(ContactModel {
            atlas,
            hamiltonians,
            parameters,
        })
    }

    pub fn hamiltonian(&self, chart_id: &str) -> Result<&Expr> {
        self.hamiltonians
            .get(chart_id)
            .ok_or_else(|| Error::Model(format!("no Hamiltonian for chart '{chart_id}'")))
    }

    pub fn chart(&self, id: &str) -> Result<&Chart> {
        self.atlas.chart(id)
    }

    /// Value of the reduced Hamiltonian at a point.
    pub fn eval_hamiltonian(&self, point: &ChartPoint, t: f64) -> Result<f64> {
        let chart = self.chart(&point.chart)?;
        let expr = self.hamiltonian(&point.chart)?;
        expr.evaluate(&chart.env(&point.coords, t, &self.parameters))
    }

    /// Order-2 jet of the Hamiltonian over the stored chart coordinates.
    pub fn hamiltonian_jet(&self, point: &ChartPoint, t: f64) -> Result<Jet2> {
        let chart = self.chart(&point.chart)?;
        let expr = self.hamiltonian(&point.chart)?;
        jet2(
            expr,
            &chart.coords,
            &chart.env(&point.coords, t, &self.parameters),
        )
    }

    /// `∂Ĥ/∂t` at a point.
    pub fn hamiltonian_time_derivative(&self, point: &ChartPoint, t: f64) -> Result<f64> {
        let chart = self.chart(&point.chart)?;
        let expr = self.hamiltonian(&point.chart)?;
        let jet = jet2(
            expr,
            &["t".to_string()],
            &chart.env(&point.coords, t, &self.parameters),
        )?;
        Ok(jet.gradient[0])
    }

    /// Contact Hamiltonian vector field, components in the stored coordinate
    /// ordering of the point's chart.
    pub fn contact_hvf(&self, point: &ChartPoint, t: f64) -> Result<Vec<f64>> {
        let chart = self.chart(&point.chart)?;
        let expr = self.hamiltonian(&point.chart)?;
        let frame = DarbouxFrame::new(chart);
        let jet = frame.jet(expr, &point.coords, t, &self.parameters)?;
        let field = frame.contact_field(&point.coords, &jet);
        Ok(frame.field_to_stored(&field))
    }

    /// Max violation of `Ĥ_target(φ(x)) = c(x) · Ĥ_source(x)` over sampled
    /// overlap points of every transition, at the given times.
    pub fn hamiltonian_cocycle_residual(
        &self,
        rng: &mut crate::sample::Lcg64,
        samples: usize,
        times: &[f64],
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for tr in &self.atlas.transitions {
            let src = self.chart(&tr.source)?;
            let h_src = self.hamiltonian(&tr.source)?;
            let h_tgt = self.hamiltonian(&tr.target)?;
            let tgt = self.chart(&tr.target)?;
            for _ in 0..samples {
                let x = tr.sample_overlap(rng);
                let y = tr.apply(src, &x)?;
                let c = tr.cocycle_at(src, &x)?;
                for &t in times {
                    let lhs = h_tgt.evaluate(&tgt.env(&y, t, &self.parameters))?;
                    let rhs = c * h_src.evaluate(&src.env(&x, t, &self.parameters))?;
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        Ok(worst)
    }
}

fn check_chart_expr(chart: &Chart, expr: &Expr, params: &Env, what: &str) -> Result<()> {
    for v in expr.free_variables() {
        if v != "t" && !chart.coords.contains(&v) && !params.contains_key(&v) {
            return Err(Error::Model(format!(
                "{what} for chart '{}' uses unbound variable '{v}'",
                chart.id
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Darboux frame: permutation + sign map between stored coordinates and the
// role ordering (z, q_1..q_n, p_1..p_n).
// ---------------------------------------------------------------------------

/// Chart-derived index maps for working in Darboux role order.
pub struct DarbouxFrame<'a> {
    pub chart: &'a Chart,
    /// `slot[d]` = stored slot of Darboux index `d` (0 = z, 1..=n = q, n+1..=2n = p).
    pub slot: Vec<usize>,
    /// `scale[d]` = sign relating stored and role values.
    pub scale: Vec<f64>,
}

/// Jet of a scalar in Darboux role order.
pub struct DarbouxJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl<'a> DarbouxFrame<'a> {
    pub fn new(chart: &'a Chart) -> DarbouxFrame<'a> {
        let n = chart.n;
        let mut slot = Vec::with_capacity(2 * n + 1);
        let mut scale = Vec::with_capacity(2 * n + 1);
        slot.push(chart.z_slot());
        for i in 1..=n {
            slot.push(chart.q_slot(i));
        }
        for i in 1..=n {
            slot.push(chart.p_slot(i));
        }
        for &s in &slot {
            scale.push(chart.sign(s));
        }
        DarbouxFrame { chart, slot, scale }
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn dim(&self) -> usize {
        2 * self.chart.n + 1
    }

    /// Darboux role values at a stored point.
    pub fn role_values(&self, coords: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.slot
                .iter()
                .zip(&self.scale)
                .map(|(&s, &sc)| sc * coords[s]),
        )
    }

    /// Momenta `p_1..p_n` in role values.
    pub fn momenta(&self, coords: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| self.scale[n + 1 + i] * coords[self.slot[n + 1 + i]])
            .collect()
    }

    /// Jet of an expression, permuted and sign-scaled into role order.
    pub fn jet(&self, expr: &Expr, coords: &[f64], t: f64, params: &Env) -> Result<DarbouxJet> {
        let env = self.chart.env(coords, t, params);
        let jet = jet2(expr, &self.chart.coords, &env)?;
        Ok(self.permute_jet(&jet))
    }

    pub fn permute_jet(&self, jet: &Jet2) -> DarbouxJet {
        let dim = self.dim();
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for d in 0..dim {
            grad[d] = self.scale[d] * jet.gradient[self.slot[d]];
            for e in 0..dim {
                hess[(d, e)] = self.scale[d] * self.scale[e] * jet.hessian[(self.slot[d], self.slot[e])];
            }
        }
        DarbouxJet {
            value: jet.value,
            grad,
            hess,
        }
    }

    /// Contact field in Darboux order `(ż, q̇_1.., ṗ_1..)` from a Hamiltonian jet.
    pub fn contact_field(&self, coords: &[f64], jet: &DarbouxJet) -> DVector<f64> {
        let n = self.n();
        let p = self.momenta(coords);
        let mut field = DVector::zeros(self.dim());
        let hz = jet.grad[0];
        let mut z_dot = -jet.value;
        for i in 0..n {
            let hq = jet.grad[1 + i];
            let hp = jet.grad[n + 1 + i];
            field[1 + i] = hp;
            field[n + 1 + i] = -hq - p[i] * hz;
            z_dot += p[i] * hp;
        }
        field[0] = z_dot;
        field
    }

    /// Jacobian `∂(field_d)/∂(role_e)` of the contact field; consumes the
    /// Hamiltonian Hessian.
    pub fn contact_field_jacobian(&self, coords: &[f64], jet: &DarbouxJet) -> DMatrix<f64> {
        let n = self.n();
        let dim = self.dim();
        let p = self.momenta(coords);
        let mut jac = DMatrix::zeros(dim, dim);
        for e in 0..dim {
            // ż = Σ p_i H_{p_i} − H
            let mut dz = -jet.grad[e];
            for i in 0..n {
                dz += p[i] * jet.hess[(n + 1 + i, e)];
                if e == n + 1 + i {
                    dz += jet.grad[n + 1 + i];
                }
            }
            jac[(0, e)] = dz;
            for i in 0..n {
                jac[(1 + i, e)] = jet.hess[(n + 1 + i, e)];
                let mut dp = -jet.hess[(1 + i, e)] - p[i] * jet.hess[(0, e)];
                if e == n + 1 + i {
                    dp -= jet.grad[0];
                }
                jac[(n + 1 + i, e)] = dp;
            }
        }
        jac
    }

    /// Map a Darboux-ordered vector back to stored coordinate slots.
    pub fn field_to_stored(&self, field: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for d in 0..self.dim() {
            out[self.slot[d]] = self.scale[d] * field[d];
        }
        out
    }

    /// Map a stored-slot vector into Darboux role order.
    pub fn stored_to_role(&self, stored: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.slot
                .iter()
                .zip(&self.scale)
                .map(|(&s, &sc)| sc * stored[s]),
        )
    }
}

// ---------------------------------------------------------------------------
// Chart-local differential forms in stored coordinates.
// ---------------------------------------------------------------------------

/// Components of the chart contact form `η` at a point, in stored slots.
pub fn darboux_form(chart: &Chart, coords: &[f64]) -> Vec<f64> {
    let n = chart.n;
    let mut eta = vec![0.0; chart.dim()];
    let zs = chart.z_slot();
    eta[zs] = chart.sign(zs);
    for i in 1..=n {
        let qs = chart.q_slot(i);
        let ps = chart.p_slot(i);
        eta[qs] = -chart.sign(qs) * chart.sign(ps) * coords[ps];
    }
    eta
}

/// Matrix of `dη` in stored slots: `dη(e_j, e_k)`.
pub fn darboux_dform(chart: &Chart) -> DMatrix<f64> {
    let dim = chart.dim();
    let mut m = DMatrix::zeros(dim, dim);
    for i in 1..=chart.n {
        let qs = chart.q_slot(i);
        let ps = chart.p_slot(i);
        let s = chart.sign(qs) * chart.sign(ps);
        m[(qs, ps)] = s;
        m[(ps, qs)] = -s;
    }
    m
}

/// Chart Reeb field: the unique `R` with `i_R η = 1`, `i_R dη = 0` for the
/// Darboux form. Chart-local by design; there is no global Reeb object.
pub fn reeb_field(chart: &Chart) -> Vec<f64> {
    let mut r = vec![0.0; chart.dim()];
    let zs = chart.z_slot();
    r[zs] = chart.sign(zs);
    r
}

/// Coefficient of the volume form `η ∧ (dη)^n` relative to
/// `dx_0 ∧ … ∧ dx_{2n}` in stored coordinate order.
pub fn nondegeneracy(chart: &Chart, coords: &[f64]) -> f64 {
    let eta = darboux_form(chart, coords);
    let deta = darboux_dform(chart);
    let dim = chart.dim();
    let factorial: f64 = (1..=chart.n).map(|k| k as f64).product();
    let mut total = 0.0;
    let mut sign = 1.0;
    for j in 0..dim {
        if eta[j] != 0.0 {
            let rest: Vec<usize> = (0..dim).filter(|&k| k != j).collect();
            total += sign * eta[j] * factorial * pfaffian(&deta, &rest);
        }
        sign = -sign;
    }
    total
}

/// Pfaffian of the antisymmetric matrix restricted to `rows`, by recursive
/// expansion along the first row. Fine for the small dimensions in play.
fn pfaffian(m: &DMatrix<f64>, rows: &[usize]) -> f64 {
    let k = rows.len();
    if k == 0 {
        return 1.0;
    }
    if k % 2 != 0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut sign = 1.0;
    for j in 1..k {
        let a = m[(rows[0], rows[j])];
        if a != 0.0 {
            let rest: Vec<usize> = rows[1..]
                .iter()
                .copied()
                .filter(|&r| r != rows[j])
                .collect();
            total += sign * a * pfaffian(m, &rest);
        }
        sign = -sign;
    }
    total
}

// ---------------------------------------------------------------------------
// Brackets.
// ---------------------------------------------------------------------------

/// Contact Jacobi bracket of two chart-local scalars at a point:
/// `{F, H} = F_q H_p − F_p H_q + (F − p F_p) H_z − (H − p H_p) F_z`.
pub fn jacobi_bracket(
    chart: &Chart,
    f: &Expr,
    h: &Expr,
    coords: &[f64],
    t: f64,
    params: &Env,
) -> Result<f64> {
    let frame = DarbouxFrame::new(chart);
    let jf = frame.jet(f, coords, t, params)?;
    let jh = frame.jet(h, coords, t, params)?;
    Ok(jacobi_bracket_from_jets(&frame, coords, &jf, &jh))
}

fn jacobi_bracket_from_jets(
    frame: &DarbouxFrame,
    coords: &[f64],
    jf: &DarbouxJet,
    jh: &DarbouxJet,
) -> f64 {
    let n = frame.n();
    let p = frame.momenta(coords);
    let fz = jf.grad[0];
    let hz = jh.grad[0];
    let mut acc = 0.0;
    let mut f_pp = 0.0;
    let mut h_pp = 0.0;
    for i in 0..n {
        let fq = jf.grad[1 + i];
        let fp = jf.grad[n + 1 + i];
        let hq = jh.grad[1 + i];
        let hp = jh.grad[n + 1 + i];
        acc += fq * hp - fp * hq;
        f_pp += p[i] * fp;
        h_pp += p[i] * hp;
    }
    acc + (jf.value - f_pp) * hz - (jh.value - h_pp) * fz
}

/// The same bracket computed through the vector fields:
/// `i_{[X^c_F, X^c_H]} η` with the Lie bracket assembled from first
/// derivatives of the two contact fields (this consumes both Hessians).
pub fn bracket_via_fields(
    chart: &Chart,
    f: &Expr,
    h: &Expr,
    coords: &[f64],
    t: f64,
    params: &Env,
) -> Result<f64> {
    let frame = DarbouxFrame::new(chart);
    let jf = frame.jet(f, coords, t, params)?;
    let jh = frame.jet(h, coords, t, params)?;
    let xf = frame.contact_field(coords, &jf);
    let xh = frame.contact_field(coords, &jh);
    let dxf = frame.contact_field_jacobian(coords, &jf);
    let dxh = frame.contact_field_jacobian(coords, &jh);
    let lie = &dxh * &xf - &dxf * &xh;
    // contract with η in role order: η = (1, −p_1..−p_n, 0..0)
    let p = frame.momenta(coords);
    let mut value = lie[0];
    for i in 0..frame.n() {
        value -= p[i] * lie[1 + i];
    }
    Ok(value)
}

/// `{f, B}` where `B` is an opaque scalar function of the stored coordinates
/// whose derivatives are taken by central finite differences (step `fd_step`).
/// Used to evaluate nested brackets without third derivatives.
pub fn bracket_with_fd_inner<B>(
    chart: &Chart,
    f: &Expr,
    inner: B,
    coords: &[f64],
    t: f64,
    params: &Env,
    fd_step: f64,
) -> Result<f64>
where
    B: Fn(&[f64]) -> Result<f64>,
{
    let frame = DarbouxFrame::new(chart);
    let jf = frame.jet(f, coords, t, params)?;
    let dim = frame.dim();
    // FD gradient of the inner function over stored slots, then into role order
    let mut stored_grad = vec![0.0; dim];
    for s in 0..dim {
        let mut xp = coords.to_vec();
        let mut xm = coords.to_vec();
        xp[s] += fd_step;
        xm[s] -= fd_step;
        stored_grad[s] = (inner(&xp)? - inner(&xm)?) / (2.0 * fd_step);
    }
    let b_value = inner(coords)?;
    let b_grad = frame.stored_to_role(&stored_grad);

    let n = frame.n();
    let p = frame.momenta(coords);
    let fz = jf.grad[0];
    let bz = b_grad[0];
    let mut acc = 0.0;
    let mut f_pp = 0.0;
    let mut b_pp = 0.0;
    for i in 0..n {
        let fq = jf.grad[1 + i];
        let fp = jf.grad[n + 1 + i];
        let bq = b_grad[1 + i];
        let bp = b_grad[n + 1 + i];
        acc += fq * bp - fp * bq;
        f_pp += p[i] * fp;
        b_pp += p[i] * bp;
    }
    Ok(acc + (jf.value - f_pp) * bz - (b_value - b_pp) * fz)
}

// ---------------------------------------------------------------------------
// Sections and Legendre graphs.
// ---------------------------------------------------------------------------

/// Per-chart section expressions `S(q, t)` generating Legendre submanifolds
/// as first-jet graphs. On overlaps the values must transform by the cocycle
/// (checked by [`section_equivariance_residual`], not enforced on build).
#[derive(Debug, Clone)]
pub struct SectionModel {
    pub sections: BTreeMap<String, Expr>,
}

impl SectionModel {
    pub fn new(atlas: &Atlas, sections: BTreeMap<String, Expr>, params: &Env) -> Result<SectionModel> {
        for (chart_id, expr) in &sections {
            let chart = atlas.chart(chart_id)?;
            for v in expr.free_variables() {
                let is_base = chart.base_names().contains(&v);
                if v != "t" && !is_base && !params.contains_key(&v) {
                    return Err(Error::Model(format!(
                        "section for chart '{chart_id}' uses variable '{v}' that is neither a base coordinate, 't', nor a parameter"
                    )));
                }
            }
        }
        Ok(SectionModel { sections })
    }

    pub fn section(&self, chart_id: &str) -> Result<&Expr> {
        self.sections
            .get(chart_id)
            .ok_or_else(|| Error::Model(format!("no section for chart '{chart_id}'")))
    }

    pub fn value(&self, chart: &Chart, q: &[f64], t: f64, params: &Env) -> Result<f64> {
        self.section(&chart.id)?
            .evaluate(&chart.base_env(q, t, params))
    }

    /// Jet of `S` over the base coordinates, in role order (gradient entry
    /// `i` is `∂S/∂Q_{i+1}` etc.).
    pub fn base_jet(&self, chart: &Chart, q: &[f64], t: f64, params: &Env) -> Result<Jet2> {
        let expr = self.section(&chart.id)?;
        let names = chart.base_names();
        let env = chart.base_env(q, t, params);
        let jet = jet2(expr, &names, &env)?;
        // scale into role values: Q_i = sign(q_slot) * stored
        let n = chart.n;
        let mut jet = jet;
        for i in 0..n {
            let s = chart.sign(chart.q_slot(i + 1));
            jet.gradient[i] *= s;
            for j in 0..n {
                let sj = chart.sign(chart.q_slot(j + 1));
                jet.hessian[(i, j)] *= s * sj;
            }
        }
        Ok(jet)
    }

    pub fn time_derivative(&self, chart: &Chart, q: &[f64], t: f64, params: &Env) -> Result<f64> {
        let expr = self.section(&chart.id)?;
        let env = chart.base_env(q, t, params);
        let jet = jet2(expr, &["t".to_string()], &env)?;
        Ok(jet.gradient[0])
    }

    /// First-jet prolongation: the point `(z = S(q,t), q, p_i = ∂S/∂q^i)` in
    /// stored chart coordinates. `q` is given in role values.
    pub fn jet_prolong(&self, chart: &Chart, q: &[f64], t: f64, params: &Env) -> Result<ChartPoint> {
        // base_env expects stored q values; convert role -> stored first
        let stored_q: Vec<f64> = (0..chart.n)
            .map(|i| chart.sign(chart.q_slot(i + 1)) * q[i])
            .collect();
        let jet = self.base_jet(chart, &stored_q, t, params)?;
        let mut coords = vec![0.0; chart.dim()];
        let zs = chart.z_slot();
        coords[zs] = chart.sign(zs) * jet.value;
        for i in 0..chart.n {
            let qs = chart.q_slot(i + 1);
            let ps = chart.p_slot(i + 1);
            coords[qs] = chart.sign(qs) * q[i];
            coords[ps] = chart.sign(ps) * jet.gradient[i];
        }
        Ok(ChartPoint::new(&chart.id, coords))
    }
}

/// Sup-norm gap between the contact field at `j¹S(q)` and the image of its
/// base projection under the tangent map of `j¹S`. Zero iff the field is
/// tangent to the Legendre graph at that point. The number is
/// chart-dependent; its vanishing is not.
pub fn tangency_residual(
    model: &ContactModel,
    section: &SectionModel,
    chart_id: &str,
    q: &[f64],
    t: f64,
) -> Result<f64> {
    let chart = model.chart(chart_id)?;
    let frame = DarbouxFrame::new(chart);
    let point = section.jet_prolong(chart, q, t, &model.parameters)?;
    let stored_q: Vec<f64> = (0..chart.n)
        .map(|i| chart.sign(chart.q_slot(i + 1)) * q[i])
        .collect();
    let s_jet = section.base_jet(chart, &stored_q, t, &model.parameters)?;

    let h_jet = frame.jet(
        model.hamiltonian(chart_id)?,
        &point.coords,
        t,
        &model.parameters,
    )?;
    let field = frame.contact_field(&point.coords, &h_jet);

    let n = chart.n;
    // v = base projection of the field; D(j¹S)·v = (∇S·v, v, Hess S·v)
    let v: Vec<f64> = (0..n).map(|i| field[1 + i]).collect();
    let mut residual: f64 = 0.0;
    let mut dz = 0.0;
    for i in 0..n {
        dz += s_jet.gradient[i] * v[i];
    }
    residual = residual.max((field[0] - dz).abs());
    for i in 0..n {
        let mut dp = 0.0;
        for j in 0..n {
            dp += s_jet.hessian[(i, j)] * v[j];
        }
        residual = residual.max((field[n + 1 + i] - dp).abs());
    }
    Ok(residual)
}

/// Max violation of section equivariance `S_target(q') = c · S_source(q)` at
/// sampled overlap points of the Legendre graph.
pub fn section_equivariance_residual(
    model: &ContactModel,
    section: &SectionModel,
    rng: &mut crate::sample::Lcg64,
    samples: usize,
    t: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for tr in &model.atlas.transitions {
        let src = model.chart(&tr.source)?;
        let tgt = model.chart(&tr.target)?;
        for _ in 0..samples {
            let probe = tr.sample_overlap(rng);
            // lift the sampled base coordinates onto the section graph
            let q_role: Vec<f64> = (0..src.n)
                .map(|i| {
                    let qs = src.q_slot(i + 1);
                    src.sign(qs) * probe[qs]
                })
                .collect();
            let x = section.jet_prolong(src, &q_role, t, &model.parameters)?;
            if !tr.covers(&x.coords) {
                continue;
            }
            let c = tr.cocycle_at(src, &x.coords)?;
            let y = tr.apply(src, &x.coords)?;
            let q_tgt: Vec<f64> = (0..tgt.n).map(|i| y[tgt.q_slot(i + 1)]).collect();
            let s_src = section.value(src, &probe_base(src, &x.coords), t, &model.parameters)?;
            let s_tgt = section.value(tgt, &q_tgt, t, &model.parameters)?;
            worst = worst.max((s_tgt - c * s_src).abs());
        }
    }
    Ok(worst)
}

fn probe_base(chart: &Chart, coords: &[f64]) -> Vec<f64> {
    (0..chart.n)
        .map(|i| coords[chart.q_slot(i + 1)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use std::f64::consts::PI;

    fn trivial_model(n: usize, h: &str) -> ContactModel {
        let atlas = Atlas::trivial_jet(n);
        let mut hs = BTreeMap::new();
        hs.insert("U".to_string(), parse(h).unwrap());
        ContactModel::new(atlas, hs, Env::new()).unwrap()
    }

    fn mobius_model(f: f64) -> ContactModel {
        let atlas = Atlas::mobius();
        let mut hs = BTreeMap::new();
        hs.insert(
            "U".to_string(),
            parse("cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z").unwrap(),
        );
        let mut params = Env::new();
        params.insert("f".to_string(), f);
        ContactModel::new(atlas, hs, params).unwrap()
    }

    #[test]
    fn darboux_form_components() {
        let atlas = Atlas::trivial_jet(1);
        let chart = atlas.chart("U").unwrap();
        // stored order (z, q1, p1); at p = 2 the form is dz - 2 dq
        assert_eq!(darboux_form(chart, &[0.0, 0.0, 2.0]), vec![1.0, -2.0, 0.0]);
        assert_eq!(darboux_form(chart, &[5.0, -3.0, 0.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn projective_form_reproduces_ratio_form() {
        // in U0 the chart form is dq^0 + p1 dq^1 + p2 dq^2
        let atlas = Atlas::projective(2);
        let chart = atlas.chart("U0").unwrap();
        let eta = darboux_form(chart, &[0.0, 0.0, 0.0, 2.0, -0.7]);
        assert_eq!(eta[0], 1.0); // dq0 (z role, sign +1)
        assert_eq!(eta[1], 2.0); // +p1 dq1
        assert_eq!(eta[2], -0.7); // +p2 dq2
        assert_eq!(eta[3], 0.0);
        assert_eq!(eta[4], 0.0);
    }

    #[test]
    fn reeb_contractions() {
        for atlas in [Atlas::trivial_jet(1), Atlas::trivial_jet(2), Atlas::projective(2)] {
            for chart in &atlas.charts {
                let r = reeb_field(chart);
                let mut rng = crate::sample::Lcg64::new(11);
                for _ in 0..100 {
                    let x = chart.sample_core(&mut rng);
                    let eta = darboux_form(chart, &x);
                    let pairing: f64 = eta.iter().zip(&r).map(|(a, b)| a * b).sum();
                    assert!((pairing - 1.0).abs() < 1e-15);
                    let deta = darboux_dform(chart);
                    for k in 0..chart.dim() {
                        let c: f64 = (0..chart.dim()).map(|j| r[j] * deta[(j, k)]).sum();
                        assert_eq!(c, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_hamiltonian_field() {
        let model = trivial_model(1, "3");
        let p = ChartPoint::new("U", vec![0.4, -1.0, 2.0]);
        let field = model.contact_hvf(&p, 0.0).unwrap();
        // stored order (z, q, p): only ż = -Ĥ survives
        assert_eq!(field, vec![-3.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_z_hamiltonian_field() {
        let model = trivial_model(1, "z");
        let p = ChartPoint::new("U", vec![1.5, 0.3, -0.7]);
        let field = model.contact_hvf(&p, 0.0).unwrap();
        assert_eq!(field, vec![-1.5, 0.0, 0.7]);
    }

    #[test]
    fn mobius_field_at_half_turn() {
        let model = mobius_model(1.0);
        // (x, pi, z) = (π, 1, 0): ẋ = 0, ż = 0, π̇ = -3/4
        let p = ChartPoint::new("U", vec![PI, 1.0, 0.0]);
        let field = model.contact_hvf(&p, 0.0).unwrap();
        assert!(field[0].abs() < 1e-15, "x-dot {}", field[0]);
        assert!((field[1] + 0.75).abs() < 1e-15, "pi-dot {}", field[1]);
        assert!(field[2].abs() < 1e-15, "z-dot {}", field[2]);
    }

    #[test]
    fn canonical_bracket_pairs() {
        let atlas = Atlas::trivial_jet(2);
        let chart = atlas.chart("U").unwrap();
        let params = Env::new();
        let x = [0.7, -0.3, 1.1, 0.5, -2.0];
        let b = jacobi_bracket(
            chart,
            &parse("q1").unwrap(),
            &parse("p1").unwrap(),
            &x,
            0.0,
            &params,
        )
        .unwrap();
        assert!((b - 1.0).abs() < 1e-15);
        let b = jacobi_bracket(
            chart,
            &parse("z").unwrap(),
            &parse("q1").unwrap(),
            &x,
            0.0,
            &params,
        )
        .unwrap();
        assert!((b - (-x[1])).abs() < 1e-15);
        // {F, F} = 0
        let f = parse("z*q1").unwrap();
        let b = jacobi_bracket(chart, &f, &f, &x, 0.0, &params).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn bracket_routes_agree_on_canonical_pairs() {
        let atlas = Atlas::trivial_jet(1);
        let chart = atlas.chart("U").unwrap();
        let params = Env::new();
        let x = [0.9, 0.4, -1.3];
        for (f, h, expected) in [
            ("q1", "p1", 1.0),
            ("z", "q1", -0.4),
        ] {
            let direct = jacobi_bracket(
                chart,
                &parse(f).unwrap(),
                &parse(h).unwrap(),
                &x,
                0.0,
                &params,
            )
            .unwrap();
            let via = bracket_via_fields(
                chart,
                &parse(f).unwrap(),
                &parse(h).unwrap(),
                &x,
                0.0,
                &params,
            )
            .unwrap();
            assert!((direct - expected).abs() < 1e-12);
            assert!((via - expected).abs() < 1e-12);
        }
        let f = parse("z + q1^2").unwrap();
        let same = bracket_via_fields(chart, &f, &f, &x, 0.0, &params).unwrap();
        assert!(same.abs() < 1e-12);
    }

    #[test]
    fn jet_prolongation_examples() {
        let atlas = Atlas::trivial_jet(1);
        let chart = atlas.chart("U").unwrap();
        let params = Env::new();
        let zero = SectionModel {
            sections: [("U".to_string(), parse("0").unwrap())].into(),
        };
        let p = zero.jet_prolong(chart, &[2.0], 0.0, &params).unwrap();
        assert_eq!(p.coords, vec![0.0, 2.0, 0.0]);

        let quad = SectionModel {
            sections: [("U".to_string(), parse("-q1^2/2").unwrap())].into(),
        };
        let p = quad.jet_prolong(chart, &[3.0], 0.0, &params).unwrap();
        assert_eq!(p.coords, vec![-4.5, 3.0, -3.0]);

        let constant = SectionModel {
            sections: [("U".to_string(), parse("7").unwrap())].into(),
        };
        let p = constant.jet_prolong(chart, &[-1.0], 0.0, &params).unwrap();
        assert_eq!(p.coords, vec![7.0, -1.0, 0.0]);
    }

    #[test]
    fn tangency_residual_examples() {
        let zero = SectionModel {
            sections: [("U".to_string(), parse("0").unwrap())].into(),
        };
        // Ĥ = z vanishes on the graph of S = 0, so the field is tangent
        let model = trivial_model(1, "z");
        let r = tangency_residual(&model, &zero, "U", &[0.8], 0.0).unwrap();
        assert!(r.abs() < 1e-15);
        // Ĥ = 1 pushes in the -z direction, not tangent
        let model = trivial_model(1, "1");
        let r = tangency_residual(&model, &zero, "U", &[0.8], 0.0).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn volume_coefficient_is_constant_factorial() {
        let atlas = Atlas::trivial_jet(1);
        let chart = atlas.chart("U").unwrap();
        let v0 = nondegeneracy(chart, &[0.0, 0.0, 0.0]);
        let v1 = nondegeneracy(chart, &[4.0, -2.0, 7.5]);
        assert_eq!(v0, 1.0);
        assert_eq!(v1, 1.0);
        let atlas = Atlas::trivial_jet(2);
        let chart = atlas.chart("U").unwrap();
        let v = nondegeneracy(chart, &[0.3, 1.0, -1.0, 0.2, 0.9]);
        assert_eq!(v.abs(), 2.0);
        let w = nondegeneracy(chart, &[9.0, -4.0, 0.0, 3.3, -8.1]);
        assert_eq!(v, w);
    }

    #[test]
    fn volume_scales_by_cocycle_power_under_gluing() {
        // pullback of the target volume equals c^(n+1) times the source one
        let atlas = Atlas::mobius();
        let chart = atlas.chart("U").unwrap();
        let tr = &atlas.transitions[0];
        let mut rng = crate::sample::Lcg64::new(5);
        for _ in 0..50 {
            let x = tr.sample_overlap(&mut rng);
            let y = tr.apply(chart, &x).unwrap();
            let c = tr.cocycle_at(chart, &x).unwrap();
            let jac = tr.jacobian(chart, &x).unwrap();
            let det = jac.determinant();
            let pulled = nondegeneracy(chart, &y) * det;
            let scaled = c.powi(chart.n as i32 + 1) * nondegeneracy(chart, &x);
            assert!((pulled - scaled).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_cocycle_residual_flags_violations() {
        let good = mobius_model(1.0);
        let mut rng = crate::sample::Lcg64::new(3);
        let r = good
            .hamiltonian_cocycle_residual(&mut rng, 100, &[0.0, 0.4])
            .unwrap();
        assert!(r < 1e-12, "residual {r}");

        let atlas = Atlas::mobius();
        let mut hs = BTreeMap::new();
        hs.insert("U".to_string(), parse("z^2").unwrap());
        let bad = ContactModel::new(atlas, hs, Env::new()).unwrap();
        let mut rng = crate::sample::Lcg64::new(3);
        let r = bad
            .hamiltonian_cocycle_residual(&mut rng, 100, &[0.0])
            .unwrap();
        assert!(r > 1e-3, "violation should be visible, got {r}");
    }

    #[test]
    fn mobius_section_equivariance() {
        // sigma(x) = cos(x/2) satisfies sigma(x + 2π) = -sigma(x)
        let model = mobius_model(1.0);
        let section = SectionModel {
            sections: [("U".to_string(), parse("cos(x/2)").unwrap())].into(),
        };
        let mut rng = crate::sample::Lcg64::new(9);
        let r = section_equivariance_residual(&model, &section, &mut rng, 200, 0.0).unwrap();
        assert!(r < 1e-12, "residual {r}");
    }
}
