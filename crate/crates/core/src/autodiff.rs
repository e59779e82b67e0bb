//! Minimal reverse-mode differentiation over dense `f64` arrays.
//!
//! Every operation appends a node to a [`Tape`]. [`Tape::backward`] walks the
//! nodes once in reverse creation order (a valid topological order of the
//! DAG) and accumulates gradients into every node that requires them. Each
//! primitive carries an explicit backward rule.
//!
//! A fresh tape is built for every optimization step, so gradients always
//! start from zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major dense array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("shape {shape:?} holds {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: Vec::new(), data: vec![v] }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    fn rows_cols(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(format!("expected a 2-d tensor, got shape {s:?}"))),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv1dSpec {
    fn default() -> Self {
        Self { stride: 1, dilation: 1, padding: 0, groups: 1 }
    }
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Relu,
    Sigmoid,
    Exp,
    Ln,
    Log10,
    Powf(f64),
    Scale(f64),
    AddScalar(f64),
    Clamp(f64, f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary(Var, Unary),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar { scalar: Var, x: Var },
    Prelu { x: Var, alpha: Var },
    Conv1d { x: Var, w: Var, b: Option<Var>, spec: Conv1dSpec },
    ConvTranspose1d { x: Var, w: Var, stride: usize },
    ConcatRows(Var, Var),
    Interpolate(Var),
    Resize(Var),
    Sum(Var),
    SumSq(Var),
    Dot(Var, Var),
    Min(Var, Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.node(v).value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last [`backward`](Self::backward) root with respect to `v`,
    /// zeros if nothing flowed into it.
    pub fn grad(&self, v: Var) -> Tensor {
        let shape = self.node(v).value.shape.clone();
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor { shape, data: g.clone() },
            None => Tensor::zeros(&shape),
        }
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let xv = &self.node(x).value;
        let data: Vec<f64> = xv
            .data
            .iter()
            .map(|&a| match kind {
                Unary::Relu => a.max(0.0),
                Unary::Sigmoid => 1.0 / (1.0 + libm::exp(-a)),
                Unary::Exp => libm::exp(a),
                Unary::Ln => libm::log(a),
                Unary::Log10 => libm::log10(a),
                Unary::Powf(p) => libm::pow(a, p),
                Unary::Scale(c) => a * c,
                Unary::AddScalar(c) => a + c,
                Unary::Clamp(lo, hi) => a.clamp(lo, hi),
            })
            .collect();
        let value = Tensor { shape: xv.shape.clone(), data };
        let rg = self.rg(x);
        self.push(value, rg, Op::Unary(x, kind))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Ln)
    }

    pub fn log10(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Log10)
    }

    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        self.unary(x, Unary::Powf(p))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Unary::Scale(c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Scale(-1.0))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Unary::AddScalar(c))
    }

    /// Elementwise clamp; the gradient passes only inside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Unary::Clamp(lo, hi))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (&self.node(a).value.shape, &self.node(b).value.shape);
        if sa != sb {
            return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor { shape: av.shape.clone(), data };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    /// Smaller of two scalars; ties send the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.expect_scalar(a, "minimum")?;
        self.expect_scalar(b, "minimum")?;
        self.binary(a, b, |x, y| if y < x { y } else { x }, Op::Min(a, b), "minimum")
    }

    fn expect_scalar(&self, v: Var, what: &str) -> Result<()> {
        if self.node(v).value.len() != 1 {
            return Err(Error::shape(format!("{what} expects a scalar, got {:?}", self.node(v).value.shape)));
        }
        Ok(())
    }

    /// Scalar times tensor.
    pub fn mul_scalar(&mut self, scalar: Var, x: Var) -> Result<Var> {
        self.expect_scalar(scalar, "mul_scalar")?;
        let s = self.scalar_value(scalar);
        let xv = &self.node(x).value;
        let value = Tensor { shape: xv.shape.clone(), data: xv.data.iter().map(|v| v * s).collect() };
        let rg = self.rg(scalar) || self.rg(x);
        Ok(self.push(value, rg, Op::MulScalar { scalar, x }))
    }

    /// Parametric ReLU with one shared slope.
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        self.expect_scalar(alpha, "prelu slope")?;
        let a = self.scalar_value(alpha);
        let xv = &self.node(x).value;
        let data = xv.data.iter().map(|&v| if v > 0.0 { v } else { a * v }).collect();
        let value = Tensor { shape: xv.shape.clone(), data };
        let rg = self.rg(x) || self.rg(alpha);
        Ok(self.push(value, rg, Op::Prelu { x, alpha }))
    }

    fn reduce(&mut self, x: Var, value: f64, op: Op, rg: bool) -> Var {
        let _ = x;
        self.push(Tensor::scalar(value), rg, op)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.node(x).value.data.iter().sum();
        let rg = self.rg(x);
        self.reduce(x, v, Op::Sum(x), rg)
    }

    pub fn sum_sq(&mut self, x: Var) -> Var {
        let v = self.node(x).value.data.iter().map(|a| a * a).sum();
        let rg = self.rg(x);
        self.reduce(x, v, Op::SumSq(x), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.node(a).value.len() != self.node(b).value.len() {
            return Err(Error::shape("dot operands differ in length"));
        }
        let v = self.node(a).value.data.iter().zip(&self.node(b).value.data).map(|(x, y)| x * y).sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.reduce(a, v, Op::Dot(a, b), rg))
    }

    /// Stack two `(r, t)` tensors along rows.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ta) = self.node(a).value.rows_cols()?;
        let (rb, tb) = self.node(b).value.rows_cols()?;
        if ta != tb {
            return Err(Error::shape(format!("concat_rows: {ta} vs {tb} columns")));
        }
        let mut data = self.node(a).value.data.clone();
        data.extend_from_slice(&self.node(b).value.data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![ra + rb, ta], data }, rg, Op::ConcatRows(a, b)))
    }

    /// Linear interpolation of `(r, t_in)` along time to `(r, out_len)`,
    /// aligning the first and last frames.
    pub fn interpolate(&mut self, x: Var, out_len: usize) -> Result<Var> {
        let (rows, tin) = self.node(x).value.rows_cols()?;
        if tin == 0 || out_len == 0 {
            return Err(Error::shape("interpolate needs non-empty input and output"));
        }
        let xv = &self.node(x).value.data;
        let mut data = vec![0.0; rows * out_len];
        for t in 0..out_len {
            let (i0, i1, f) = interp_weights(t, tin, out_len);
            for r in 0..rows {
                data[r * out_len + t] = (1.0 - f) * xv[r * tin + i0] + f * xv[r * tin + i1];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape: vec![rows, out_len], data }, rg, Op::Interpolate(x)))
    }

    /// Trim or zero-pad the columns of an `(r, t)` tensor to `len`.
    pub fn resize(&mut self, x: Var, len: usize) -> Result<Var> {
        let (rows, cols) = self.node(x).value.rows_cols()?;
        let xv = &self.node(x).value.data;
        let mut data = vec![0.0; rows * len];
        let keep = cols.min(len);
        for r in 0..rows {
            data[r * len..r * len + keep].copy_from_slice(&xv[r * cols..r * cols + keep]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape: vec![rows, len], data }, rg, Op::Resize(x)))
    }

    /// 1-d convolution. `x: (c_in, l)`, `w: (c_out, c_in / groups, k)`, `b: (c_out)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv1dSpec) -> Result<Var> {
        let geo = ConvGeometry::new(self.value(x), self.value(w), spec)?;
        if let Some(b) = b {
            if self.value(b).shape() != [geo.c_out] {
                return Err(Error::shape(format!("conv bias shape {:?}", self.value(b).shape())));
            }
        }
        let xv = &self.node(x).value.data;
        let wv = &self.node(w).value.data;
        let mut out = vec![0.0; geo.c_out * geo.l_out];
        for co in 0..geo.c_out {
            let row = &mut out[co * geo.l_out..(co + 1) * geo.l_out];
            if let Some(b) = b {
                row.fill(self.nodes[b.0].value.data[co]);
            }
            let g = co / geo.cout_g;
            for cil in 0..geo.cin_g {
                let ci = g * geo.cin_g + cil;
                let xrow = &xv[ci * geo.l_in..(ci + 1) * geo.l_in];
                for j in 0..geo.k {
                    let wj = wv[(co * geo.cin_g + cil) * geo.k + j];
                    let (off, t0, t1) = geo.tap_range(j);
                    if geo.spec.stride == 1 {
                        let start = (t0 as isize + off) as usize;
                        axpy(&mut row[t0..t1], wj, &xrow[start..start + (t1 - t0)]);
                    } else {
                        for t in t0..t1 {
                            row[t] += wj * xrow[(t as isize * geo.spec.stride as isize + off) as usize];
                        }
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor { shape: vec![geo.c_out, geo.l_out], data: out }, rg, Op::Conv1d { x, w, b, spec }))
    }

    /// Transposed 1-d convolution with overlap-add.
    /// `x: (c_in, k_frames)`, `w: (c_in, c_out, kernel)`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        let (c_in, frames) = self.node(x).value.rows_cols()?;
        let (wc_in, c_out, k) = match self.node(w).value.shape.as_slice() {
            [a, b, c] => (*a, *b, *c),
            s => return Err(Error::shape(format!("transposed conv weight shape {s:?}"))),
        };
        if wc_in != c_in || stride == 0 || frames == 0 {
            return Err(Error::shape("transposed conv geometry"));
        }
        let l_out = (frames - 1) * stride + k;
        let xv = &self.node(x).value.data;
        let wv = &self.node(w).value.data;
        let mut out = vec![0.0; c_out * l_out];
        for ci in 0..c_in {
            let xrow = &xv[ci * frames..(ci + 1) * frames];
            for co in 0..c_out {
                let orow = &mut out[co * l_out..(co + 1) * l_out];
                for j in 0..k {
                    let wj = wv[(ci * c_out + co) * k + j];
                    for (t, xi) in xrow.iter().enumerate() {
                        orow[t * stride + j] += wj * xi;
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Tensor { shape: vec![c_out, l_out], data: out }, rg, Op::ConvTranspose1d { x, w, stride }))
    }

    /// Backpropagates from the scalar `root`, replacing any previous gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.node(root).value.len() != 1 {
            return Err(Error::shape("backward needs a scalar root"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value.data;
        let wants = |v: Var| nodes[v.0].requires_grad;
        macro_rules! acc {
            ($v:expr) => {
                slot(grads, nodes, $v)
            };
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Unary(x, kind) => {
                if !wants(*x) {
                    return;
                }
                let xv = val(*x);
                let yv = &nodes[i].value.data;
                let dx = acc!(*x);
                for k in 0..g.len() {
                    let a = xv[k];
                    let d = match *kind {
                        Unary::Relu => {
                            if a > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Sigmoid => yv[k] * (1.0 - yv[k]),
                        Unary::Exp => yv[k],
                        Unary::Ln => 1.0 / a,
                        Unary::Log10 => 1.0 / (a * LN_10),
                        Unary::Powf(p) => p * libm::pow(a, p - 1.0),
                        Unary::Scale(c) => c,
                        Unary::AddScalar(_) => 1.0,
                        Unary::Clamp(lo, hi) => {
                            if (lo..=hi).contains(&a) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    dx[k] += g[k] * d;
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if wants(*b) {
                    acc!(*b).iter_mut().zip(g).for_each(|(d, g)| *d += sign * g);
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let bv = val(*b);
                    acc!(*a).iter_mut().zip(g).zip(bv).for_each(|((d, g), y)| *d += g * y);
                }
                if wants(*b) {
                    let av = val(*a);
                    acc!(*b).iter_mut().zip(g).zip(av).for_each(|((d, g), x)| *d += g * x);
                }
            }
            Op::Min(a, b) => {
                let (x, y) = (val(*a)[0], val(*b)[0]);
                let pick = if y < x { *b } else { *a };
                if wants(pick) {
                    acc!(pick)[0] += g[0];
                }
            }
            Op::MulScalar { scalar, x } => {
                let s = val(*scalar)[0];
                if wants(*x) {
                    acc!(*x).iter_mut().zip(g).for_each(|(d, g)| *d += g * s);
                }
                if wants(*scalar) {
                    let xv = val(*x);
                    acc!(*scalar)[0] += g.iter().zip(xv).map(|(g, x)| g * x).sum::<f64>();
                }
            }
            Op::Prelu { x, alpha } => {
                let a = val(*alpha)[0];
                let xv = val(*x);
                if wants(*x) {
                    acc!(*x)
                        .iter_mut()
                        .zip(g)
                        .zip(xv)
                        .for_each(|((d, g), v)| *d += if *v > 0.0 { *g } else { a * g });
                }
                if wants(*alpha) {
                    acc!(*alpha)[0] += g.iter().zip(xv).filter(|(_, v)| **v <= 0.0).map(|(g, v)| g * v).sum::<f64>();
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    acc!(*x).iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::SumSq(x) => {
                if wants(*x) {
                    let xv = val(*x);
                    acc!(*x).iter_mut().zip(xv).for_each(|(d, v)| *d += 2.0 * g[0] * v);
                }
            }
            Op::Dot(a, b) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(val(*b)).for_each(|(d, y)| *d += g[0] * y);
                }
                if wants(*b) {
                    acc!(*b).iter_mut().zip(val(*a)).for_each(|(d, x)| *d += g[0] * x);
                }
            }
            Op::ConcatRows(a, b) => {
                let na = nodes[a.0].value.len();
                if wants(*a) {
                    acc!(*a).iter_mut().zip(&g[..na]).for_each(|(d, g)| *d += g);
                }
                if wants(*b) {
                    acc!(*b).iter_mut().zip(&g[na..]).for_each(|(d, g)| *d += g);
                }
            }
            Op::Interpolate(x) => {
                if !wants(*x) {
                    return;
                }
                let tin = nodes[x.0].value.shape[1];
                let (rows, out_len) = (nodes[i].value.shape[0], nodes[i].value.shape[1]);
                let dx = acc!(*x);
                for t in 0..out_len {
                    let (i0, i1, f) = interp_weights(t, tin, out_len);
                    for r in 0..rows {
                        let gv = g[r * out_len + t];
                        dx[r * tin + i0] += (1.0 - f) * gv;
                        dx[r * tin + i1] += f * gv;
                    }
                }
            }
            Op::Resize(x) => {
                if !wants(*x) {
                    return;
                }
                let cols = nodes[x.0].value.shape[1];
                let (rows, len) = (nodes[i].value.shape[0], nodes[i].value.shape[1]);
                let keep = cols.min(len);
                let dx = acc!(*x);
                for r in 0..rows {
                    for t in 0..keep {
                        dx[r * cols + t] += g[r * len + t];
                    }
                }
            }
            Op::Conv1d { x, w, b, spec } => {
                let geo = ConvGeometry::new(&nodes[x.0].value, &nodes[w.0].value, *spec)
                    .expect("geometry validated in forward");
                if let Some(b) = b {
                    if wants(*b) {
                        let db = acc!(*b);
                        for co in 0..geo.c_out {
                            db[co] += g[co * geo.l_out..(co + 1) * geo.l_out].iter().sum::<f64>();
                        }
                    }
                }
                let xv = val(*x);
                let wv = val(*w);
                let want_x = wants(*x);
                let want_w = wants(*w);
                let mut dw = want_w.then(|| vec![0.0; wv.len()]);
                let mut dx = if want_x { Some(acc!(*x)) } else { None };
                for co in 0..geo.c_out {
                    let grow = &g[co * geo.l_out..(co + 1) * geo.l_out];
                    let grp = co / geo.cout_g;
                    for cil in 0..geo.cin_g {
                        let ci = grp * geo.cin_g + cil;
                        let xbase = ci * geo.l_in;
                        for j in 0..geo.k {
                            let widx = (co * geo.cin_g + cil) * geo.k + j;
                            let (off, t0, t1) = geo.tap_range(j);
                            let s = geo.spec.stride as isize;
                            if s == 1 {
                                let start = xbase + (t0 as isize + off) as usize;
                                let span = t1 - t0;
                                let g = &grow[t0..t1];
                                if let Some(dw) = dw.as_deref_mut() {
                                    dw[widx] += dot(g, &xv[start..start + span]);
                                }
                                if let Some(dx) = dx.as_deref_mut() {
                                    axpy(&mut dx[start..start + span], wv[widx], g);
                                }
                                continue;
                            }
                            if let Some(dw) = dw.as_deref_mut() {
                                let mut acc = 0.0;
                                for t in t0..t1 {
                                    acc += grow[t] * xv[xbase + (t as isize * s + off) as usize];
                                }
                                dw[widx] += acc;
                            }
                            if let Some(dx) = dx.as_deref_mut() {
                                let wj = wv[widx];
                                for t in t0..t1 {
                                    dx[xbase + (t as isize * s + off) as usize] += wj * grow[t];
                                }
                            }
                        }
                    }
                }
                if let Some(local) = dw {
                    add_into(acc!(*w), &local);
                }
            }
            Op::ConvTranspose1d { x, w, stride } => {
                let (c_in, frames) = (nodes[x.0].value.shape[0], nodes[x.0].value.shape[1]);
                let (c_out, k) = (nodes[w.0].value.shape[1], nodes[w.0].value.shape[2]);
                let l_out = nodes[i].value.shape[1];
                let xv = val(*x);
                let wv = val(*w);
                let want_x = wants(*x);
                let want_w = wants(*w);
                let mut dw = want_w.then(|| vec![0.0; wv.len()]);
                let mut dx = if want_x { Some(acc!(*x)) } else { None };
                for ci in 0..c_in {
                    for co in 0..c_out {
                        let grow = &g[co * l_out..(co + 1) * l_out];
                        for j in 0..k {
                            let widx = (ci * c_out + co) * k + j;
                            if let Some(dw) = dw.as_deref_mut() {
                                let mut acc = 0.0;
                                for t in 0..frames {
                                    acc += xv[ci * frames + t] * grow[t * stride + j];
                                }
                                dw[widx] += acc;
                            }
                            if let Some(dx) = dx.as_deref_mut() {
                                let wj = wv[widx];
                                for t in 0..frames {
                                    dx[ci * frames + t] += wj * grow[t * stride + j];
                                }
                            }
                        }
                    }
                }
                if let Some(local) = dw {
                    add_into(acc!(*w), &local);
                }
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    let n = nodes[v.0].value.len();
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

/// Four independent accumulators so the sum vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    dst.iter_mut().zip(x).for_each(|(d, v)| *d += a * v);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn interp_weights(t: usize, tin: usize, out_len: usize) -> (usize, usize, f64) {
    if tin == 1 || out_len == 1 {
        return (0, 0, 0.0);
    }
    let pos = t as f64 * (tin - 1) as f64 / (out_len - 1) as f64;
    let i0 = (libm::floor(pos) as usize).min(tin - 1);
    let i1 = (i0 + 1).min(tin - 1);
    (i0, i1, pos - i0 as f64)
}

struct ConvGeometry {
    c_out: usize,
    cin_g: usize,
    cout_g: usize,
    k: usize,
    l_in: usize,
    l_out: usize,
    spec: Conv1dSpec,
}

impl ConvGeometry {
    fn new(x: &Tensor, w: &Tensor, spec: Conv1dSpec) -> Result<Self> {
        let (c_in, l_in) = x.rows_cols()?;
        let (c_out, cin_g, k) = match w.shape.as_slice() {
            [a, b, c] => (*a, *b, *c),
            s => return Err(Error::shape(format!("conv weight shape {s:?}"))),
        };
        if spec.groups == 0 || spec.stride == 0 || spec.dilation == 0 || k == 0 {
            return Err(Error::shape("conv stride, dilation, groups and kernel must be positive"));
        }
        if c_in % spec.groups != 0 || c_out % spec.groups != 0 || cin_g * spec.groups != c_in {
            return Err(Error::shape(format!(
                "conv channels: input {c_in}, weight {c_out}x{cin_g}, groups {}",
                spec.groups
            )));
        }
        let span = spec.dilation * (k - 1) + 1;
        let padded = l_in + 2 * spec.padding;
        if padded < span {
            return Err(Error::shape(format!("conv input length {l_in} shorter than kernel span {span}")));
        }
        let l_out = (padded - span) / spec.stride + 1;
        Ok(Self { c_out, cin_g, cout_g: c_out / spec.groups, k, l_in, l_out, spec })
    }

    /// Input offset of tap `j` and the output range `[t0, t1)` for which it
    /// lands inside the unpadded input.
    fn tap_range(&self, j: usize) -> (isize, usize, usize) {
        let off = (j * self.spec.dilation) as isize - self.spec.padding as isize;
        let s = self.spec.stride as isize;
        let t0 = if off >= 0 { 0 } else { ((-off + s - 1) / s) as usize };
        let last = self.l_in as isize - 1 - off;
        let t1 = if last < 0 { 0 } else { ((last / s) + 1) as usize };
        (off, t0.min(self.l_out), t1.min(self.l_out).max(t0.min(self.l_out)))
    }
}
