//! First and second partial derivatives of expressions at a point.
//!
//! The propagation carries a full order-2 jet (value, gradient, Hessian)
//! through every AST node, so Hessians come out clean enough for the bracket
//! and tangency identities. Central finite differences are kept around as an
//! independent cross-check ([`fd_check`]), never as the production path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{pow_checked, BinaryOp, Env, Expr, UnaryOp};

/// Value, gradient and Hessian of an expression over an ordered variable list.
#[derive(Debug, Clone)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Jet2 {
    fn constant(value: f64, dim: usize) -> Jet2 {
        Jet2 {
            value,
            gradient: DVector::zeros(dim),
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    fn seed(value: f64, index: usize, dim: usize) -> Jet2 {
        let mut gradient = DVector::zeros(dim);
        gradient[index] = 1.0;
        Jet2 {
            value,
            gradient,
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    fn is_locally_constant(&self) -> bool {
        self.gradient.iter().all(|g| *g == 0.0) && self.hessian.iter().all(|h| *h == 0.0)
    }

    /// Chain rule through a scalar function with derivatives `d1`, `d2`.
    fn chain(&self, value: f64, d1: f64, d2: f64) -> Jet2 {
        let gradient = &self.gradient * d1;
        let outer = &self.gradient * self.gradient.transpose();
        let hessian = &self.hessian * d1 + outer * d2;
        Jet2 {
            value,
            gradient,
            hessian,
        }
    }
}

/// Compute the order-2 jet of `expr` with respect to `vars` at `env`.
///
/// Variables bound in `env` but absent from `vars` are treated as constants.
pub fn jet2(expr: &Expr, vars: &[String], env: &Env) -> Result<Jet2> {
    let dim = vars.len();
    propagate(expr, vars, env, dim)
}

fn propagate(expr: &Expr, vars: &[String], env: &Env, dim: usize) -> Result<Jet2> {
    match expr {
        Expr::Const(c) => Ok(Jet2::constant(*c, dim)),
        Expr::Var(name) => {
            let value = *env
                .get(name)
                .ok_or_else(|| Error::UnboundVariable(name.clone()))?;
            match vars.iter().position(|v| v == name) {
                Some(index) => Ok(Jet2::seed(value, index, dim)),
                None => Ok(Jet2::constant(value, dim)),
            }
        }
        Expr::Unary(op, inner) => {
            let u = propagate(inner, vars, env, dim)?;
            unary_jet(*op, &u)
        }
        Expr::Binary(op, lhs, rhs) => {
            let a = propagate(lhs, vars, env, dim)?;
            let b = propagate(rhs, vars, env, dim)?;
            binary_jet(*op, &a, &b)
        }
    }
}

fn unary_jet(op: UnaryOp, u: &Jet2) -> Result<Jet2> {
    let x = u.value;
    let (value, d1, d2) = match op {
        UnaryOp::Neg => (-x, -1.0, 0.0),
        UnaryOp::Sin => (x.sin(), x.cos(), -x.sin()),
        UnaryOp::Cos => (x.cos(), -x.sin(), -x.cos()),
        UnaryOp::Exp => {
            let e = x.exp();
            (e, e, e)
        }
        UnaryOp::Ln => {
            if x <= 0.0 {
                return Err(Error::Domain(format!("ln of non-positive value {x}")));
            }
            (x.ln(), 1.0 / x, -1.0 / (x * x))
        }
        UnaryOp::Sqrt => {
            if x < 0.0 {
                return Err(Error::Domain(format!("sqrt of negative value {x}")));
            }
            if x == 0.0 && !u.is_locally_constant() {
                return Err(Error::Domain("derivative of sqrt at zero".into()));
            }
            let r = x.sqrt();
            let d1 = if x == 0.0 { 0.0 } else { 0.5 / r };
            let d2 = if x == 0.0 { 0.0 } else { -0.25 / (r * x) };
            (r, d1, d2)
        }
        UnaryOp::Abs => (x.abs(), sign_of(x), 0.0),
    };
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite result in '{}'",
            op.name()
        )));
    }
    Ok(u.chain(value, d1, d2))
}

fn sign_of(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn binary_jet(op: BinaryOp, a: &Jet2, b: &Jet2) -> Result<Jet2> {
    match op {
        BinaryOp::Add => Ok(Jet2 {
            value: a.value + b.value,
            gradient: &a.gradient + &b.gradient,
            hessian: &a.hessian + &b.hessian,
        }),
        BinaryOp::Sub => Ok(Jet2 {
            value: a.value - b.value,
            gradient: &a.gradient - &b.gradient,
            hessian: &a.hessian - &b.hessian,
        }),
        BinaryOp::Mul => {
            let value = a.value * b.value;
            let gradient = &a.gradient * b.value + &b.gradient * a.value;
            let cross = &a.gradient * b.gradient.transpose();
            let hessian =
                &a.hessian * b.value + &b.hessian * a.value + &cross + cross.transpose();
            Ok(Jet2 {
                value,
                gradient,
                hessian,
            })
        }
        BinaryOp::Div => {
            if b.value == 0.0 {
                return Err(Error::Domain("division by zero".into()));
            }
            // from a = f*b: g_f = (g_a - f g_b)/b, H_f = (H_a - g_f⊗g_b - g_b⊗g_f - f H_b)/b
            let value = a.value / b.value;
            let gradient = (&a.gradient - &b.gradient * value) / b.value;
            let cross = &gradient * b.gradient.transpose();
            let hessian =
                (&a.hessian - &cross - cross.transpose() - &b.hessian * value) / b.value;
            Ok(Jet2 {
                value,
                gradient,
                hessian,
            })
        }
        BinaryOp::Pow => pow_jet(a, b),
    }
}

fn pow_jet(a: &Jet2, b: &Jet2) -> Result<Jet2> {
    if b.is_locally_constant() {
        // power rule; covers negative and zero bases for integer exponents
        let e = b.value;
        let value = pow_checked(a.value, e)?;
        let d1 = if e == 0.0 {
            0.0
        } else {
            e * pow_checked(a.value, e - 1.0)?
        };
        let d2 = if e == 0.0 || e == 1.0 {
            0.0
        } else {
            e * (e - 1.0) * pow_checked(a.value, e - 2.0)?
        };
        return Ok(a.chain(value, d1, d2));
    }
    // variable exponent: a^b = exp(b ln a), requires positive base
    if a.value <= 0.0 {
        return Err(Error::Domain(format!(
            "power with variable exponent requires positive base, got {}",
            a.value
        )));
    }
    let ln_a = unary_jet(UnaryOp::Ln, a)?;
    let prod = binary_jet(BinaryOp::Mul, b, &ln_a)?;
    unary_jet(UnaryOp::Exp, &prod)
}

/// Maximum absolute deviation between the jet derivatives and central finite
/// differences.
///
/// The gradient is differenced with step `h`; the Hessian with `sqrt(h)`,
/// which balances truncation against roundoff for second differences.
pub fn fd_check(expr: &Expr, vars: &[String], env: &Env, h: f64) -> Result<f64> {
    let jet = jet2(expr, vars, env)?;
    let n = vars.len();
    let mut worst: f64 = 0.0;

    let eval_at = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut env2 = env.clone();
        for (k, delta) in shifts {
            let name = &vars[*k];
            let v = env2
                .get_mut(name)
                .ok_or_else(|| Error::UnboundVariable(name.clone()))?;
            *v += delta;
        }
        expr.evaluate(&env2)
    };

    for i in 0..n {
        let fp = eval_at(&[(i, h)])?;
        let fm = eval_at(&[(i, -h)])?;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - jet.gradient[i]).abs());
    }

    let h2 = h.sqrt();
    let f0 = expr.evaluate(env)?;
    for i in 0..n {
        for j in 0..n {
            let fd = if i == j {
                let fp = eval_at(&[(i, h2)])?;
                let fm = eval_at(&[(i, -h2)])?;
                (fp - 2.0 * f0 + fm) / (h2 * h2)
            } else {
                let fpp = eval_at(&[(i, h2), (j, h2)])?;
                let fpm = eval_at(&[(i, h2), (j, -h2)])?;
                let fmp = eval_at(&[(i, -h2), (j, h2)])?;
                let fmm = eval_at(&[(i, -h2), (j, -h2)])?;
                (fpp - fpm - fmp + fmm) / (4.0 * h2 * h2)
            };
            worst = worst.max((fd - jet.hessian[(i, j)]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn env(pairs: &[(&str, f64)]) -> Env {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn quadratic_jet() {
        let e = parse("q^2").unwrap();
        let jet = jet2(&e, &names(&["q"]), &env(&[("q", 3.0)])).unwrap();
        assert_eq!(jet.value, 9.0);
        assert_eq!(jet.gradient[0], 6.0);
        assert_eq!(jet.hessian[(0, 0)], 2.0);
    }

    #[test]
    fn bilinear_hessian() {
        let e = parse("q1*q2").unwrap();
        let jet = jet2(
            &e,
            &names(&["q1", "q2"]),
            &env(&[("q1", 1.0), ("q2", 1.0)]),
        )
        .unwrap();
        assert_eq!(jet.hessian[(0, 0)], 0.0);
        assert_eq!(jet.hessian[(0, 1)], 1.0);
        assert_eq!(jet.hessian[(1, 0)], 1.0);
        assert_eq!(jet.hessian[(1, 1)], 0.0);
    }

    #[test]
    fn gluing_hamiltonian_momentum_derivative_vanishes() {
        // d/dpi of cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z
        //   = cos(x/2)*pi + f*sin(x/2)*z = 0 at x = pi (the angle), z = 0
        let e = parse("cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z").unwrap();
        let jet = jet2(
            &e,
            &names(&["pi"]),
            &env(&[
                ("x", std::f64::consts::PI),
                ("pi", 1.0),
                ("z", 0.0),
                ("f", 1.0),
            ]),
        )
        .unwrap();
        assert!(jet.gradient[0].abs() < 1e-15);
    }

    #[test]
    fn variables_outside_list_are_constants() {
        let e = parse("a*q").unwrap();
        let jet = jet2(&e, &names(&["q"]), &env(&[("a", 5.0), ("q", 2.0)])).unwrap();
        assert_eq!(jet.value, 10.0);
        assert_eq!(jet.gradient[0], 5.0);
        assert_eq!(jet.hessian[(0, 0)], 0.0);
    }

    #[test]
    fn fd_check_polynomial() {
        let e = parse("q^2").unwrap();
        let dev = fd_check(&e, &names(&["q"]), &env(&[("q", 3.0)]), 1e-5).unwrap();
        assert!(dev <= 1e-6, "deviation {dev}");
    }

    #[test]
    fn fd_check_exponential() {
        let e = parse("exp(z)").unwrap();
        let dev = fd_check(&e, &names(&["z"]), &env(&[("z", 0.0)]), 1e-5).unwrap();
        assert!(dev <= 1e-6, "deviation {dev}");
    }

    #[test]
    fn fd_check_gluing_hamiltonian() {
        let e = parse("cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z").unwrap();
        let vars = names(&["x", "pi", "z"]);
        for point in [
            [0.7, 0.4, -0.3],
            [2.1, -1.0, 0.8],
            [4.0, 0.2, 0.2],
            [8.5, -0.6, -1.1],
        ] {
            let env = env(&[
                ("x", point[0]),
                ("pi", point[1]),
                ("z", point[2]),
                ("f", 1.0),
            ]);
            let dev = fd_check(&e, &vars, &env, 1e-5).unwrap();
            assert!(dev <= 1e-5, "deviation {dev} at {point:?}");
        }
    }

    #[test]
    fn hessian_is_symmetric() {
        let e = parse("sin(a*b) + exp(a/( b + 2 )) * c^3").unwrap();
        let vars = names(&["a", "b", "c"]);
        let jet = jet2(
            &e,
            &vars,
            &env(&[("a", 0.7), ("b", -0.4), ("c", 1.3)]),
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = (jet.hessian[(i, j)] - jet.hessian[(j, i)]).abs();
                let scale = jet.hessian[(i, j)].abs().max(1.0);
                assert!(d / scale <= 1e-12);
            }
        }
    }

    #[test]
    fn variable_exponent_uses_exp_ln() {
        let e = parse("x^y").unwrap();
        let vars = names(&["x", "y"]);
        let jet = jet2(&e, &vars, &env(&[("x", 2.0), ("y", 3.0)])).unwrap();
        assert!((jet.value - 8.0).abs() < 1e-12);
        // d/dx x^y = y x^(y-1) = 12, d/dy = x^y ln x
        assert!((jet.gradient[0] - 12.0).abs() < 1e-10);
        assert!((jet.gradient[1] - 8.0 * 2.0_f64.ln()).abs() < 1e-10);
        // negative base with variable exponent is rejected
        assert!(jet2(&e, &vars, &env(&[("x", -2.0), ("y", 3.0)])).is_err());
    }
}
