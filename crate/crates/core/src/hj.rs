//! Contact Hamilton–Jacobi residuals and characteristic propagation.
//!
//! A section `S` solves the (nonautonomous) contact Hamilton–Jacobi equation
//! when `Ĥ(j¹S_t(q), t) + ∂S/∂t(q, t) = 0`; for time-independent data the
//! second term vanishes and the equation reduces to `Ĥ ∘ j¹S = 0`, which is
//! equivalent to tangency of the contact field to the Legendre graph of `S`.
//! [`hj_verify`] reports both residuals over a grid so the equivalence can be
//! observed; [`hj_characteristics`] launches the contact flow from the graph.
//!
//! Characteristic crossing is not detected: each launch is integrated
//! independently and reported as-is.

use serde::Serialize;

use crate::contact::{tangency_residual, ContactModel, SectionModel};
use crate::dynamics::{integrate, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::ChartPoint;

/// A uniform closed grid axis: `count` points from `min` to `max` inclusive
/// (`count == 1` collapses to `min`).
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn point(value: f64) -> GridAxis {
        GridAxis {
            min: value,
            max: value,
            count: 1,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.min + k as f64 * step).collect()
    }
}

/// One grid evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct HjRow {
    pub q: Vec<f64>,
    pub t: f64,
    pub residual: f64,
    pub tangency: f64,
}

/// Grid report of Hamilton–Jacobi and tangency residuals.
#[derive(Debug, Clone, Serialize)]
pub struct HjReport {
    pub chart: String,
    pub axes: Vec<GridAxis>,
    pub t_axis: GridAxis,
    pub max_residual: f64,
    pub argmax_q: Vec<f64>,
    pub argmax_t: f64,
    pub max_tangency: f64,
    pub argmax_tangency_q: Vec<f64>,
    pub argmax_tangency_t: f64,
    pub rows: Vec<HjRow>,
}

/// `Ĥ(j¹S_t(q), t) + ∂S/∂t(q, t)` at a base point (`q` in role values).
pub fn hj_residual(
    model: &ContactModel,
    section: &SectionModel,
    chart_id: &str,
    q: &[f64],
    t: f64,
) -> Result<f64> {
    let chart = model.chart(chart_id)?;
    let point = section.jet_prolong(chart, q, t, &model.parameters)?;
    let h = model.eval_hamiltonian(&point, t)?;
    let stored_q: Vec<f64> = (0..chart.n)
        .map(|i| chart.sign(chart.q_slot(i + 1)) * q[i])
        .collect();
    let s_t = section.time_derivative(chart, &stored_q, t, &model.parameters)?;
    Ok(h + s_t)
}

/// Evaluate HJ and tangency residuals over a uniform grid.
pub fn hj_verify(
    model: &ContactModel,
    section: &SectionModel,
    chart_id: &str,
    axes: &[GridAxis],
    t_axis: &GridAxis,
) -> Result<HjReport> {
    let chart = model.chart(chart_id)?;
    if axes.len() != chart.n {
        return Err(Error::Model(format!(
            "grid needs {} axes for chart '{chart_id}', got {}",
            chart.n,
            axes.len()
        )));
    }
    let mut rows = Vec::new();
    let mut max_residual = f64::NEG_INFINITY;
    let mut max_tangency = f64::NEG_INFINITY;
    let mut argmax_q = Vec::new();
    let mut argmax_t = 0.0;
    let mut argmax_tq = Vec::new();
    let mut argmax_tt = 0.0;

    for t in t_axis.values() {
        for q in grid_points(axes) {
            let residual = hj_residual(model, section, chart_id, &q, t)?;
            let tangency = tangency_residual(model, section, chart_id, &q, t)?;
            if residual.abs() > max_residual {
                max_residual = residual.abs();
                argmax_q = q.clone();
                argmax_t = t;
            }
            if tangency > max_tangency {
                max_tangency = tangency;
                argmax_tq = q.clone();
                argmax_tt = t;
            }
            rows.push(HjRow {
                q,
                t,
                residual,
                tangency,
            });
        }
    }

    Ok(HjReport {
        chart: chart_id.to_string(),
        axes: axes.to_vec(),
        t_axis: *t_axis,
        max_residual,
        argmax_q,
        argmax_t,
        max_tangency,
        argmax_tangency_q: argmax_tq,
        argmax_tangency_t: argmax_tt,
        rows,
    })
}

/// Row-major cartesian product of the axes (last axis fastest).
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let values = axis.values();
        let mut next = Vec::with_capacity(points.len() * values.len());
        for prefix in &points {
            for v in &values {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        points = next;
    }
    points
}

/// Launch the contact flow from `j¹S_{t0}(q0)` for each start and return the
/// sampled characteristics. When `S` solves the HJ equation the `z` samples
/// reconstruct the propagated section along the moving base points.
pub fn hj_characteristics(
    model: &ContactModel,
    section: &SectionModel,
    chart_id: &str,
    starts: &[Vec<f64>],
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Vec<Trajectory>> {
    let chart = model.chart(chart_id)?;
    let mut out = Vec::with_capacity(starts.len());
    for q0 in starts {
        let point: ChartPoint = section.jet_prolong(chart, q0, t0, &model.parameters)?;
        out.push(integrate(model, &point, t0, t1, h)?);
    }
    Ok(out)
}
