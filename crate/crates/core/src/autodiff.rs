//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A `Tape` records the forward computation as a flat list of nodes; calling
//! `backward` walks it once in reverse and accumulates gradients for every
//! node. Matrices are row-major `f64`, sized for the small networks used
//! here, so no BLAS is involved.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn row_vec(values: &[f64]) -> Self {
        Matrix { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    /// Scaled standard-normal entries.
    pub fn randn(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen::<f64>();
                scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Adds a 1 x cols bias to every row.
    pub fn add_row_broadcast(&self, bias: &Matrix) -> Matrix {
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.cols);
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] += bias.data[c];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Numerically stable row-wise softmax.
pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows {
        let row = &mut out.data[r * m.cols..(r + 1) * m.cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Handle to a tape node.
pub type Var = usize;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRowBroadcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    RowSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    Mean(Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Forward computation recorder.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!((m.rows, m.cols), (1, 1));
        m.data[0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.add(&self.nodes[b].value);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Var {
        let v = self.nodes[a].value.add_row_broadcast(&self.nodes[bias].value);
        self.push(v, Op::AddRowBroadcast(a, bias))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let va = &self.nodes[a].value;
        let vb = &self.nodes[b].value;
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols));
        let v = Matrix {
            rows: va.rows,
            cols: va.cols,
            data: va.data.iter().zip(&vb.data).map(|(x, y)| x - y).collect(),
        };
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let va = &self.nodes[a].value;
        let vb = &self.nodes[b].value;
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols));
        let v = Matrix {
            rows: va.rows,
            cols: va.cols,
            data: va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect(),
        };
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.nodes[a].value.scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.nodes[a].value.map(|x| if x >= 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let v = row_softmax(&self.nodes[a].value);
        self.push(v, Op::RowSoftmax(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let m = &self.nodes[p].value;
                assert_eq!(m.rows, rows);
                out.data[r * cols + offset..r * cols + offset + m.cols]
                    .copy_from_slice(m.row(r));
                offset += m.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.nodes[parts[0]].value.cols;
        let rows: usize = parts.iter().map(|&p| self.nodes[p].value.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            let m = &self.nodes[p].value;
            assert_eq!(m.cols, cols);
            data.extend_from_slice(&m.data);
        }
        self.push(Matrix { rows, cols, data }, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let m = &self.nodes[a].value;
        assert!(start < end && end <= m.rows);
        let v = Matrix {
            rows: end - start,
            cols: m.cols,
            data: m.data[start * m.cols..end * m.cols].to_vec(),
        };
        self.push(v, Op::SliceRows(a, start, end))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = &self.nodes[a].value;
        let v = m.data.iter().sum::<f64>() / m.data.len() as f64;
        self.push(Matrix { rows: 1, cols: 1, data: vec![v] }, Op::Mean(a))
    }

    /// Mean squared error between two same-shape nodes.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean(sq)
    }

    /// Runs the reverse pass from a scalar node. Returns one gradient slot per
    /// node; untouched nodes have `None`.
    pub fn backward(&self, loss: Var) -> Vec<Option<Matrix>> {
        let m = &self.nodes[loss].value;
        assert_eq!((m.rows, m.cols), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Matrix { rows: 1, cols: 1, data: vec![1.0] });
        for idx in (0..=loss).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let bt = self.nodes[*b].value.transpose();
                    let at = self.nodes[*a].value.transpose();
                    accumulate(&mut grads[*a], &g.matmul(&bt));
                    accumulate(&mut grads[*b], &at.matmul(&g));
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads[*a], &g.transpose());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g);
                }
                Op::AddRowBroadcast(a, bias) => {
                    accumulate(&mut grads[*a], &g);
                    let mut bg = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            bg.data[c] += g.get(r, c);
                        }
                    }
                    accumulate(&mut grads[*bias], &bg);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let ga = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&self.nodes[*b].value.data)
                            .map(|(x, y)| x * y)
                            .collect(),
                    };
                    let gb = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&self.nodes[*a].value.data)
                            .map(|(x, y)| x * y)
                            .collect(),
                    };
                    accumulate(&mut grads[*a], &ga);
                    accumulate(&mut grads[*b], &gb);
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads[*a], &g.scale(*s));
                }
                Op::Relu(a) => {
                    let mask = &self.nodes[*a].value;
                    let gm = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&mask.data)
                            .map(|(x, m)| if *m > 0.0 { *x } else { 0.0 })
                            .collect(),
                    };
                    accumulate(&mut grads[*a], &gm);
                }
                Op::LeakyRelu(a, slope) => {
                    let mask = &self.nodes[*a].value;
                    let gm = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&mask.data)
                            .map(|(x, m)| if *m >= 0.0 { *x } else { slope * x })
                            .collect(),
                    };
                    accumulate(&mut grads[*a], &gm);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let gm = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&y.data)
                            .map(|(x, t)| x * (1.0 - t * t))
                            .collect(),
                    };
                    accumulate(&mut grads[*a], &gm);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value;
                    let gm = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&y.data)
                            .map(|(x, s)| x * s * (1.0 - s))
                            .collect(),
                    };
                    accumulate(&mut grads[*a], &gm);
                }
                Op::RowSoftmax(a) => {
                    let y = &self.nodes[idx].value;
                    let mut gm = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..g.cols {
                            gm.set(r, c, yr[c] * (gr[c] - dot));
                        }
                    }
                    accumulate(&mut grads[*a], &gm);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.nodes[p].value.cols;
                        let mut gp = Matrix::zeros(g.rows, pc);
                        for r in 0..g.rows {
                            gp.data[r * pc..(r + 1) * pc]
                                .copy_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        accumulate(&mut grads[p], &gp);
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pr = self.nodes[p].value.rows;
                        let gp = Matrix {
                            rows: pr,
                            cols: g.cols,
                            data: g.data[offset * g.cols..(offset + pr) * g.cols].to_vec(),
                        };
                        accumulate(&mut grads[p], &gp);
                        offset += pr;
                    }
                }
                Op::SliceRows(a, start, _end) => {
                    let src = &self.nodes[*a].value;
                    let mut gp = Matrix::zeros(src.rows, src.cols);
                    gp.data[start * src.cols..start * src.cols + g.data.len()]
                        .copy_from_slice(&g.data);
                    accumulate(&mut grads[*a], &gp);
                }
                Op::Mean(a) => {
                    let src = &self.nodes[*a].value;
                    let s = g.data[0] / src.data.len() as f64;
                    let gp = Matrix {
                        rows: src.rows,
                        cols: src.cols,
                        data: vec![s; src.data.len()],
                    };
                    accumulate(&mut grads[*a], &gp);
                }
            }
        }
        grads
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: &Matrix) {
    match slot {
        Some(existing) => {
            for (e, x) in existing.data.iter_mut().zip(&g.data) {
                *e += x;
            }
        }
        None => *slot = Some(g.clone()),
    }
}

/// Adam optimizer over a fixed list of parameter matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Option<Matrix>]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g.data[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g.data[j] * g.data[j];
                let mh = m[j] / b1t;
                let vh = v[j] / b2t;
                p.data[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// target <- tau * online + (1 - tau) * target, elementwise.
pub fn soft_update(online: &Matrix, target: &mut Matrix, tau: f64) {
    assert_eq!((online.rows, online.cols), (target.rows, target.cols));
    for (t, o) in target.data.iter_mut().zip(&online.data) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Central finite difference over every parameter entry.
    fn fd_check(
        build: impl Fn(&mut Tape, &[Var]) -> Var,
        params: &[Matrix],
        tol: f64,
    ) {
        let eval = |ps: &[Matrix]| {
            let mut tape = Tape::new();
            let ids: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
            let loss = build(&mut tape, &ids);
            tape.scalar(loss)
        };
        let mut tape = Tape::new();
        let ids: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = build(&mut tape, &ids);
        let grads = tape.backward(loss);
        for (pi, p) in params.iter().enumerate() {
            let g = grads[ids[pi]].as_ref().expect("grad missing");
            for j in 0..p.data.len() {
                let eps = 1e-5 * p.data[j].abs().max(1.0);
                let mut plus = params.to_vec();
                plus[pi].data[j] += eps;
                let mut minus = params.to_vec();
                minus[pi].data[j] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let denom = fd.abs().max(g.data[j].abs()).max(1e-8);
                assert!(
                    ((fd - g.data[j]) / denom).abs() < tol,
                    "param {pi} entry {j}: fd {fd}, ad {}",
                    g.data[j]
                );
            }
        }
    }

    fn seeded(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::stream(seed, crate::rng::StreamKind::Init, [rows as u64, cols as u64, 0, 0]);
        Matrix::randn(rows, cols, 0.7, &mut rng)
    }

    #[test]
    fn matmul_values() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn softmax_rows_normalize() {
        let m = Matrix::from_rows(&[vec![0.0, 2f64.ln()], vec![5.0, 5.0]]);
        let s = row_softmax(&m);
        assert_relative_eq!(s.get(0, 0), 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.get(0, 1), 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.get(1, 0), 0.5, max_relative = 1e-12);
        for r in 0..2 {
            let sum: f64 = s.row(r).iter().sum();
            assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn gradcheck_dense_chain() {
        let params = vec![seeded(3, 4, 1), seeded(1, 4, 2), seeded(4, 2, 3)];
        fd_check(
            |tape, ids| {
                let x = tape.leaf(Matrix::from_rows(&[
                    vec![0.3, -0.7, 1.1],
                    vec![-0.2, 0.4, 0.9],
                ]));
                let h = tape.matmul(x, ids[0]);
                let h = tape.add_row_broadcast(h, ids[1]);
                let h = tape.relu(h);
                let y = tape.matmul(h, ids[2]);
                let t = tape.leaf(Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.3, 0.4]]));
                tape.mse(y, t)
            },
            &params,
            1e-6,
        );
    }

    #[test]
    fn gradcheck_softmax_attention_block() {
        let params = vec![seeded(4, 3, 4), seeded(4, 3, 5), seeded(4, 2, 6)];
        fd_check(
            |tape, ids| {
                let x = tape.leaf(seeded(5, 4, 7));
                let q = tape.matmul(x, ids[0]);
                let k = tape.matmul(x, ids[1]);
                let v = tape.matmul(x, ids[2]);
                let kt = tape.transpose(k);
                let scores = tape.matmul(q, kt);
                let scaled = tape.scale(scores, 1.0 / (3.0f64).sqrt());
                let attn = tape.row_softmax(scaled);
                let out = tape.matmul(attn, v);
                let t = tape.leaf(seeded(5, 2, 8));
                tape.mse(out, t)
            },
            &params,
            1e-6,
        );
    }

    #[test]
    fn gradcheck_nonlinear_mix() {
        let params = vec![seeded(2, 3, 9), seeded(9, 3, 10)];
        fd_check(
            |tape, ids| {
                let x = tape.leaf(seeded(4, 2, 11));
                let h = tape.matmul(x, ids[0]);
                let a = tape.tanh(h);
                let b = tape.sigmoid(h);
                let c = tape.leaky_relu(h, 0.2);
                let cat = tape.concat_cols(&[a, b, c]);
                let m = tape.matmul(cat, ids[1]);
                let sl = tape.slice_rows(m, 1, 3);
                let t = tape.leaf(seeded(2, 3, 12));
                tape.mse(sl, t)
            },
            &params,
            1e-6,
        );
    }

    #[test]
    fn gradcheck_concat_rows() {
        let params = vec![seeded(2, 2, 13), seeded(2, 2, 14)];
        fd_check(
            |tape, ids| {
                let a = tape.tanh(ids[0]);
                let b = tape.scale(ids[1], 0.5);
                let cat = tape.concat_rows(&[a, b]);
                let t = tape.leaf(seeded(4, 2, 15));
                tape.mse(cat, t)
            },
            &params,
            1e-6,
        );
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = Matrix::row_vec(&[5.0, -3.0]);
        let mut adam = Adam::new(0.05);
        for _ in 0..500 {
            let g = Matrix { rows: 1, cols: 2, data: p.data.iter().map(|x| 2.0 * x).collect() };
            adam.step(&mut [&mut p], &[Some(g)]);
        }
        assert!(p.frob_norm() < 1e-3, "norm {}", p.frob_norm());
    }

    #[test]
    fn soft_update_blends() {
        let online = Matrix::row_vec(&[2.0, 4.0]);
        let mut target = Matrix::row_vec(&[0.0, 0.0]);
        soft_update(&online, &mut target, 0.5);
        assert_eq!(target.data, vec![1.0, 2.0]);
        soft_update(&online, &mut target, 1.0);
        assert_eq!(target.data, vec![2.0, 4.0]);
        let before = target.clone();
        soft_update(&online, &mut target, 0.0);
        assert_eq!(target, before);
    }
}
