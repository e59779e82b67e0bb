//! Central finite-difference checker for model sub-graphs.

use avse_core::autodiff::{Tape, Tensor, Var};
use avse_core::model::{Bound, Model};
use avse_core::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Param(usize),
    Input(usize),
}

#[derive(Debug, Clone)]
pub struct Report {
    pub worst: f64,
    pub worst_at: String,
    pub checked: usize,
}

/// Builds a sub-graph from the bound model and the given input vars.
pub type Graph<'a> = dyn Fn(&Model, &mut Tape, &Bound, &[Var]) -> Result<Var> + 'a;

fn lcg(state: &mut u64) -> u64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    *state >> 33
}

/// Fixed projection that turns any output into a scalar.
fn projection(len: usize) -> Tensor {
    let mut s = 0x9e37_79b9u64;
    let w = (0..len)
        .map(|_| {
            let r = lcg(&mut s);
            let v = 0.5 + (r % 1000) as f64 / 1000.0;
            if r & (1 << 20) == 0 { v } else { -v }
        })
        .collect();
    Tensor::new(vec![len], w).unwrap()
}

/// Checks `probes` entries of each target. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn check(model: &Model, inputs: &[Tensor], targets: &[Target], probes: usize, graph: &Graph, h: f64, floor: f64) -> Report {
    let (mut tape, root, p, vars) = scalar_of(model, inputs, graph, true);
    tape.backward(root).unwrap();
    let mut report = Report { worst: 0.0, worst_at: String::new(), checked: 0 };
    let mut seed = 12345u64;
    for &t in targets {
        let (analytic, len) = match t {
            Target::Param(i) => (tape.grad(p.vars()[i]), model.params()[i].len()),
            Target::Input(i) => (tape.grad(vars[i]), inputs[i].len()),
        };
        for _ in 0..probes.min(len) {
            let j = (lcg(&mut seed) as usize) % len;
            let eval = |delta: f64| {
                let mut m = model.clone();
                let mut ins = inputs.to_vec();
                match t {
                    Target::Param(i) => m.params_mut()[i].data_mut()[j] += delta,
                    Target::Input(i) => ins[i].data_mut()[j] += delta,
                }
                let (tape, root, _, _) = scalar_of(&m, &ins, graph, false);
                tape.scalar_value(root)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel > report.worst {
                report.worst = rel;
                report.worst_at = format!("{t:?}[{j}]: analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    report
}

fn scalar_of(model: &Model, inputs: &[Tensor], graph: &Graph, grad: bool) -> (Tape, Var, Bound, Vec<Var>) {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, grad);
    let vars: Vec<Var> = inputs.iter().map(|t| if grad { tape.leaf(t.clone()) } else { tape.constant(t.clone()) }).collect();
    let out = graph(model, &mut tape, &p, &vars).unwrap();
    let value = tape.value(out);
    let root = if value.len() == 1 {
        tape.sum(out)
    } else {
        let proj = projection(value.len());
        let proj = tape.constant(Tensor::new(value.shape().to_vec(), proj.into_data()).unwrap());
        tape.dot(out, proj).unwrap()
    };
    (tape, root, p, vars)
}
