//! Shared central-difference gradient checks used by the gradcheck suite and
//! the acceptance gate.

#![allow(dead_code)]

use lesa_core::modulator::{KanScalar, MlpScalar, Modulator, ModulatorGrad};
use lesa_core::predictor::{LesaExpert, ModulatorSpec};
use lesa_core::spline::SplineGrid;
use lesa_core::trajectory::{Feature, Schedule};
use lesa_core::SeededRng;

pub const H: f64 = 1e-5;

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / got.abs().max(want.abs()).max(1.0)
}

/// Two-sided slope through a cloned copy with one slot poked by h.
pub fn central<T: Clone>(base: &T, poke: impl Fn(&mut T, f64), eval: impl Fn(&T) -> f64) -> f64 {
    let mut plus = base.clone();
    poke(&mut plus, H);
    let mut minus = base.clone();
    poke(&mut minus, -H);
    (eval(&plus) - eval(&minus)) / (2.0 * H)
}

/// Worst relative error over `configs` randomized spline-head checks,
/// covering every parameter tensor and the input gradient.
pub fn kan_gradcheck_worst(configs: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..configs {
        let input_len = 3 + (seed % 9) as usize;
        let components = 1 + (seed % 5) as usize;
        let grid =
            SplineGrid::with_defaults(4 + (seed % 6) as usize, 2 + (seed % 2) as usize).unwrap();
        let kan = KanScalar::init(input_len, components, grid, seed).unwrap();
        let mut rng = SeededRng::new(seed ^ 0xd1f);
        let dt: Vec<f64> = rng.normal_vec(input_len).iter().map(|v| 0.5 * v).collect();

        let (_, cache) = kan.forward(&dt).unwrap();
        let grad = kan.backward(&cache, 1.0).unwrap();
        let eval = |k: &KanScalar| k.forward(&dt).unwrap().0;

        for i in 0..kan.a.len() {
            worst = worst.max(rel_err(grad.a[i], central(&kan, |k, h| k.a[i] += h, eval)));
        }
        for i in 0..kan.w.len() {
            worst = worst.max(rel_err(grad.w[i], central(&kan, |k, h| k.w[i] += h, eval)));
        }
        for i in 0..kan.coeffs.len() {
            worst = worst.max(rel_err(
                grad.coeffs[i],
                central(&kan, |k, h| k.coeffs[i] += h, eval),
            ));
        }
        worst = worst.max(rel_err(grad.bias, central(&kan, |k, h| k.bias += h, eval)));
        for l in 0..dt.len() {
            let fd = central(&dt, |d, h| d[l] += h, |d| kan.forward(d).unwrap().0);
            worst = worst.max(rel_err(grad.dt[l], fd));
        }
    }
    worst
}

/// Worst relative error over `configs` randomized MLP-head checks.
pub fn mlp_gradcheck_worst(configs: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..configs {
        let input_len = 2 + (seed % 10) as usize;
        let hidden = 1 + (seed % 7) as usize;
        let mlp = MlpScalar::init(input_len, hidden, seed).unwrap();
        let mut rng = SeededRng::new(seed ^ 0x3_14);
        let dt = rng.normal_vec(input_len);

        let (_, cache) = mlp.forward(&dt).unwrap();
        let grad = mlp.backward(&cache, 1.0).unwrap();
        let eval = |m: &MlpScalar| m.forward(&dt).unwrap().0;

        for i in 0..mlp.u.len() {
            worst = worst.max(rel_err(grad.u[i], central(&mlp, |m, h| m.u[i] += h, eval)));
        }
        for i in 0..mlp.c.len() {
            worst = worst.max(rel_err(grad.c[i], central(&mlp, |m, h| m.c[i] += h, eval)));
        }
        for i in 0..mlp.v.len() {
            worst = worst.max(rel_err(grad.v[i], central(&mlp, |m, h| m.v[i] += h, eval)));
        }
        for l in 0..dt.len() {
            let fd = central(&dt, |d, h| d[l] += h, |d| mlp.forward(d).unwrap().0);
            worst = worst.max(rel_err(grad.dt[l], fd));
        }
    }
    worst
}

fn kan_of(e: &mut LesaExpert) -> &mut KanScalar {
    match &mut e.modulator {
        Modulator::Kan(k) => k,
        Modulator::Mlp(_) => unreachable!(),
    }
}

fn mlp_of(e: &mut LesaExpert) -> &mut MlpScalar {
    match &mut e.modulator {
        Modulator::Mlp(m) => m,
        Modulator::Kan(_) => unreachable!(),
    }
}

/// Worst relative error over `configs` randomized full-expert checks. The
/// scalar readout is linear in the prediction, so the loss stays smooth in
/// every parameter.
pub fn expert_gradcheck_worst(configs: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..configs {
        let window = 1 + (seed % 4) as usize;
        let dim = 1 + (seed % 5) as usize;
        let steps = 5 + (seed % 8) as usize;
        let spec = if seed % 2 == 0 {
            ModulatorSpec::kan(2 + (seed % 4) as usize)
        } else {
            ModulatorSpec::mlp(2 + (seed % 5) as usize)
        };
        let mut expert = LesaExpert::init(window, dim, steps, &spec, seed).unwrap();
        let mut rng = SeededRng::new(seed ^ 0xabc);
        for v in expert.w.iter_mut().chain(expert.b.iter_mut()) {
            *v = 0.4 * rng.next_normal();
        }
        let history: Vec<Feature> = (0..window + (seed % 3) as usize)
            .map(|_| Feature::new(rng.normal_vec(dim)).unwrap())
            .collect();
        let sched = Schedule::new(steps).unwrap();
        let pred_step = (seed % steps as u64) as usize;
        let weights = rng.normal_vec(dim);

        let loss = |e: &LesaExpert| -> f64 {
            let (out, _) = e.predict(&history, &sched, pred_step).unwrap();
            out.as_slice().iter().zip(&weights).map(|(o, c)| o * c).sum()
        };
        let (_, cache) = expert.predict(&history, &sched, pred_step).unwrap();
        let grad = expert.backward(&cache, &weights).unwrap();

        for i in 0..expert.w.len() {
            worst = worst.max(rel_err(grad.w[i], central(&expert, |e, h| e.w[i] += h, loss)));
        }
        for i in 0..expert.b.len() {
            worst = worst.max(rel_err(grad.b[i], central(&expert, |e, h| e.b[i] += h, loss)));
        }
        match (&expert.modulator, &grad.modulator) {
            (Modulator::Kan(k), ModulatorGrad::Kan(g)) => {
                for i in 0..k.a.len() {
                    let fd = central(&expert, |e, h| kan_of(e).a[i] += h, loss);
                    worst = worst.max(rel_err(g.a[i], fd));
                }
                for i in 0..k.w.len() {
                    let fd = central(&expert, |e, h| kan_of(e).w[i] += h, loss);
                    worst = worst.max(rel_err(g.w[i], fd));
                }
                for i in 0..k.coeffs.len() {
                    let fd = central(&expert, |e, h| kan_of(e).coeffs[i] += h, loss);
                    worst = worst.max(rel_err(g.coeffs[i], fd));
                }
                let fd = central(&expert, |e, h| kan_of(e).bias += h, loss);
                worst = worst.max(rel_err(g.bias, fd));
            }
            (Modulator::Mlp(m), ModulatorGrad::Mlp(g)) => {
                for i in 0..m.u.len() {
                    let fd = central(&expert, |e, h| mlp_of(e).u[i] += h, loss);
                    worst = worst.max(rel_err(g.u[i], fd));
                }
                for i in 0..m.c.len() {
                    let fd = central(&expert, |e, h| mlp_of(e).c[i] += h, loss);
                    worst = worst.max(rel_err(g.c[i], fd));
                }
                for i in 0..m.v.len() {
                    let fd = central(&expert, |e, h| mlp_of(e).v[i] += h, loss);
                    worst = worst.max(rel_err(g.v[i], fd));
                }
            }
            _ => panic!("gradient kind does not match modulator"),
        }
    }
    worst
}
