//! Trajectory integration with chart switching, plus autonomization.
//!
//! Fixed-step classical RK4 drives the time-dependent contact field. Chart
//! switches happen only at step boundaries: once a step lands outside the
//! current chart's core, the registered transition whose target core contains
//! the image is applied (declaration order breaks ties). The margin between
//! core and domain provides hysteresis against switch thrashing.

use serde::Serialize;

use crate::contact::ContactModel;
use crate::error::{Error, Result};
use crate::geometry::ChartPoint;

/// A chart switch applied during integration.
#[derive(Debug, Clone, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: String,
    pub to: String,
}

/// Time-ordered samples of an integrated flow with chart-switch events.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, ChartPoint)>,
    pub events: Vec<SwitchEvent>,
    pub step: f64,
    pub method: String,
}

impl Trajectory {
    pub fn end(&self) -> &(f64, ChartPoint) {
        self.samples.last().expect("trajectory has samples")
    }
}

fn rk4_step(model: &ContactModel, point: &ChartPoint, t: f64, h: f64) -> Result<Vec<f64>> {
    let eval = |coords: &[f64], time: f64| -> Result<Vec<f64>> {
        model.contact_hvf(&ChartPoint::new(&point.chart, coords.to_vec()), time)
    };
    let x = &point.coords;
    let k1 = eval(x, t)?;
    let k2 = eval(&shifted(x, &k1, h / 2.0), t + h / 2.0)?;
    let k3 = eval(&shifted(x, &k2, h / 2.0), t + h / 2.0)?;
    let k4 = eval(&shifted(x, &k3, h), t + h)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn shifted(x: &[f64], k: &[f64], factor: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + factor * ki).collect()
}

/// Integrate the contact flow from `start` over `[t0, t1]` with step `h`.
///
/// The step count is `round((t1 − t0)/h)` (at least one), so the actual step
/// divides the interval exactly.
pub fn integrate(
    model: &ContactModel,
    start: &ChartPoint,
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Trajectory> {
    if !(h > 0.0) {
        return Err(Error::Model("integration step must be positive".into()));
    }
    if !(t1 > t0) {
        return Err(Error::Model("integration needs t1 > t0".into()));
    }
    let chart = model.chart(&start.chart)?;
    if !chart.contains(&start.coords) {
        return Err(Error::OutsideDomain {
            chart: start.chart.clone(),
        });
    }

    let n_steps = (((t1 - t0) / h).round() as usize).max(1);
    let h_eff = (t1 - t0) / n_steps as f64;

    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut events = Vec::new();
    let mut current = start.clone();
    samples.push((t0, current.clone()));

    for k in 0..n_steps {
        let t = t0 + k as f64 * h_eff;
        let t_new = t0 + (k + 1) as f64 * h_eff;
        let coords = rk4_step(model, &current, t, h_eff)?;
        let chart = model.chart(&current.chart)?;
        let inside = chart.contains(&coords);
        let in_core = inside && chart.in_core(&coords);

        if in_core {
            current = ChartPoint::new(&current.chart, coords);
        } else {
            // left the core (or the domain): look for a transition whose
            // target core contains the image, in declaration order
            let mut switched = None;
            for tr in model.atlas.transitions_from(&current.chart) {
                if !tr.covers(&coords) {
                    continue;
                }
                let target = model.chart(&tr.target)?;
                let image = tr.apply(chart, &coords)?;
                if target.in_core(&image) {
                    switched = Some((tr.target.clone(), image));
                    break;
                }
            }
            match switched {
                Some((target, image)) => {
                    events.push(SwitchEvent {
                        t: t_new,
                        from: current.chart.clone(),
                        to: target.clone(),
                    });
                    current = ChartPoint::new(&target, image);
                }
                None if inside => {
                    // hysteresis band: keep integrating in the same chart
                    current = ChartPoint::new(&current.chart, coords);
                }
                None => return Err(Error::Escape { t: t_new }),
            }
        }
        samples.push((t_new, current.clone()));
    }

    Ok(Trajectory {
        samples,
        events,
        step: h_eff,
        method: "rk4".to_string(),
    })
}

/// Max residual of the decay relation along a trajectory:
/// `|dĤ/dt + (∂Ĥ/∂z)·Ĥ − ∂Ĥ/∂t|`, with `dĤ/dt` a centered difference along
/// the samples. Triples interrupted by a chart switch are skipped.
pub fn decay_check(model: &ContactModel, trajectory: &Trajectory) -> Result<f64> {
    let samples = &trajectory.samples;
    let mut worst: f64 = 0.0;
    for k in 1..samples.len().saturating_sub(1) {
        let (t_prev, p_prev) = &samples[k - 1];
        let (t_mid, p_mid) = &samples[k];
        let (t_next, p_next) = &samples[k + 1];
        if p_prev.chart != p_mid.chart || p_mid.chart != p_next.chart {
            continue;
        }
        if trajectory
            .events
            .iter()
            .any(|e| e.t > *t_prev && e.t <= *t_next)
        {
            continue;
        }
        let h_prev = model.eval_hamiltonian(p_prev, *t_prev)?;
        let h_next = model.eval_hamiltonian(p_next, *t_next)?;
        let dh_dt = (h_next - h_prev) / (t_next - t_prev);

        let value = model.eval_hamiltonian(p_mid, *t_mid)?;
        let jet = model.hamiltonian_jet(p_mid, *t_mid)?;
        let chart = model.chart(&p_mid.chart)?;
        let zs = chart.z_slot();
        let hz = chart.sign(zs) * jet.gradient[zs];
        let ht = model.hamiltonian_time_derivative(p_mid, *t_mid)?;

        worst = worst.max((dh_dt + hz * value - ht).abs());
    }
    Ok(worst)
}

/// A point of the autonomized phase space: base point, auxiliary fiber
/// coordinate and time.
#[derive(Debug, Clone)]
pub struct ExtendedPoint {
    pub point: ChartPoint,
    pub zeta: f64,
    pub t: f64,
}

/// Field of the autonomized dynamics over `(base coords…, ζ, t)`:
/// the frozen-time contact field, `ζ̇ = −∂Ĥ/∂t`, `ṫ = 1`.
pub fn autonomize_field(model: &ContactModel, ext: &ExtendedPoint) -> Result<Vec<f64>> {
    let mut field = model.contact_hvf(&ext.point, ext.t)?;
    field.push(-model.hamiltonian_time_derivative(&ext.point, ext.t)?);
    field.push(1.0);
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Env};
    use crate::geometry::Atlas;
    use std::collections::BTreeMap;

    fn trivial_model(h: &str) -> ContactModel {
        let atlas = Atlas::trivial_jet(1);
        let mut hs = BTreeMap::new();
        hs.insert("U".to_string(), parse(h).unwrap());
        ContactModel::new(atlas, hs, Env::new()).unwrap()
    }

    #[test]
    fn constant_hamiltonian_translates_z_exactly() {
        let model = trivial_model("1");
        let start = ChartPoint::new("U", vec![0.0, 0.0, 0.0]);
        let traj = integrate(&model, &start, 0.0, 1.0, 0.01).unwrap();
        let (t_end, end) = traj.end();
        assert_eq!(*t_end, 1.0);
        assert!((end.coords[0] + 1.0).abs() < 1e-12);
        assert!(traj.events.is_empty());
    }

    #[test]
    fn exponential_decay_flow() {
        let model = trivial_model("z");
        let start = ChartPoint::new("U", vec![1.0, 0.0, 1.0]);
        let traj = integrate(&model, &start, 0.0, 1.0, 0.01).unwrap();
        let (_, end) = traj.end();
        let expected = (-1.0_f64).exp();
        assert!((end.coords[0] - expected).abs() < 1e-8, "z {}", end.coords[0]);
        assert!((end.coords[2] - expected).abs() < 1e-8, "p {}", end.coords[2]);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let model = trivial_model("z");
        let start = ChartPoint::new("U", vec![1.0, 0.0, 1.0]);
        let expected = (-1.0_f64).exp();
        let err = |h: f64| {
            let traj = integrate(&model, &start, 0.0, 1.0, h).unwrap();
            (traj.end().1.coords[0] - expected).abs()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!(ratio >= 12.0, "convergence ratio {ratio}");
    }

    #[test]
    fn decay_residual_small_on_analytic_flows() {
        let model = trivial_model("z");
        let start = ChartPoint::new("U", vec![1.0, 0.0, 1.0]);
        let traj = integrate(&model, &start, 0.0, 1.0, 1e-3).unwrap();
        let r = decay_check(&model, &traj).unwrap();
        assert!(r <= 1e-6, "residual {r}");

        let model = trivial_model("4");
        let traj = integrate(&model, &start, 0.0, 1.0, 1e-2).unwrap();
        let r = decay_check(&model, &traj).unwrap();
        assert!(r <= 1e-10, "residual {r}");
    }

    #[test]
    fn autonomized_field_components() {
        // Ĥ = t·z at (z,q,p) = (1,0,0), t = 2
        let model = trivial_model("t*z");
        let ext = ExtendedPoint {
            point: ChartPoint::new("U", vec![1.0, 0.0, 0.0]),
            zeta: 0.0,
            t: 2.0,
        };
        let f = autonomize_field(&model, &ext).unwrap();
        assert_eq!(f.len(), 5);
        assert!((f[0] + 2.0).abs() < 1e-15); // ż = -Ĥ
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], 0.0);
        assert!((f[3] + 1.0).abs() < 1e-15); // ζ̇ = -∂Ĥ/∂t = -z
        assert_eq!(f[4], 1.0);
    }

    #[test]
    fn autonomization_projects_to_frozen_time_field() {
        let model = trivial_model("t*z + q1*p1 + sin(t)*p1^2");
        let mut rng = crate::sample::Lcg64::new(31);
        let chart = model.atlas.chart("U").unwrap();
        for _ in 0..100 {
            let coords = chart.sample_core(&mut rng);
            let t = rng.uniform(-1.0, 2.0);
            let ext = ExtendedPoint {
                point: ChartPoint::new("U", coords.clone()),
                zeta: 0.3,
                t,
            };
            let full = autonomize_field(&model, &ext).unwrap();
            let frozen = model
                .contact_hvf(&ChartPoint::new("U", coords), t)
                .unwrap();
            for (a, b) in full.iter().zip(&frozen) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert_eq!(full[4], 1.0);
        }
    }

    #[test]
    fn escape_is_reported() {
        // on the Möbius strip, a field pushing x down in a region where no
        // gluing covers would escape; emulate with a shrunken custom domain
        let mut atlas = Atlas::mobius();
        atlas.transitions.clear();
        let mut hs = BTreeMap::new();
        // ẋ = ∂Ĥ/∂π = -1 pushes x steadily down and out of (0, 3π)
        hs.insert("U".to_string(), parse("0 - pi").unwrap());
        let model = ContactModel::new(atlas, hs, Env::new()).unwrap();
        let start = ChartPoint::new("U", vec![0.5, 0.0, 0.0]);
        let err = integrate(&model, &start, 0.0, 2.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::Escape { .. }));
    }

    #[test]
    fn step_bound_invariant_holds() {
        let model = trivial_model("z + p1^2/2");
        let start = ChartPoint::new("U", vec![0.5, 0.1, 0.8]);
        let traj = integrate(&model, &start, 0.0, 1.0, 0.01).unwrap();
        for pair in traj.samples.windows(2) {
            let (t_a, a) = &pair[0];
            let (t_b, b) = &pair[1];
            if a.chart != b.chart {
                continue;
            }
            let fa = model.contact_hvf(a, *t_a).unwrap();
            let fb = model.contact_hvf(b, *t_b).unwrap();
            let sup = fa
                .iter()
                .chain(&fb)
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            let delta = a
                .coords
                .iter()
                .zip(&b.coords)
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(delta <= sup * traj.step * 1.5 + 1e-12);
        }
    }
}
