//! A small reverse-mode autodiff tape over dense `f64` matrices.
//!
//! Every operation appends a node holding its forward value; nodes are
//! created in topological order, so [`Graph::backward`] is a single reverse
//! sweep.

use ndarray::{concatenate, s, Array2, Axis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    RmsNorm {
        x: Var,
        gain: Var,
        inv_rms: Vec<f64>,
    },
    CausalSoftmax(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    MaskedMse {
        pred: Var,
        diff: Array2<f64>,
        mask: Array2<f64>,
        count: f64,
    },
    Sum(Vec<Var>),
}

#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax where query `i` sees keys `j ≤ i + (n_keys − n_queries)`.
pub(crate) fn causal_softmax(scores: &Array2<f64>) -> Array2<f64> {
    let (nq, nk) = scores.dim();
    let offset = nk as isize - nq as isize;
    let mut out = Array2::zeros((nq, nk));
    for i in 0..nq {
        let last = (i as isize + offset).min(nk as isize - 1);
        if last < 0 {
            continue;
        }
        let last = last as usize;
        let row = scores.slice(s![i, ..=last]);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for j in 0..=last {
            let e = (scores[(i, j)] - max).exp();
            out[(i, j)] = e;
            total += e;
        }
        for j in 0..=last {
            out[(i, j)] /= total;
        }
    }
    out
}

pub(crate) const RMS_EPS: f64 = 1e-6;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][(0, 0)]
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf whose gradient is reported under parameter `id`.
    pub fn param(&mut self, id: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// `a + row`, broadcasting a `1 × n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let inv_rms: Vec<f64> = xv
            .rows()
            .into_iter()
            .map(|r| 1.0 / (r.dot(&r) / n + RMS_EPS).sqrt())
            .collect();
        let g = self.value(gain).row(0).to_owned();
        let mut out = xv.clone();
        for (mut row, &r) in out.rows_mut().into_iter().zip(&inv_rms) {
            row *= r;
            row *= &g;
        }
        self.push(out, Op::RmsNorm { x, gain, inv_rms })
    }

    pub fn causal_softmax(&mut self, scores: Var) -> Var {
        let v = causal_softmax(self.value(scores));
        self.push(v, Op::CausalSoftmax(scores))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let v = t.select(Axis(0), ids);
        self.push(v, Op::Gather(table, ids.to_vec()))
    }

    /// Mean of `(pred − target)²` over entries where `mask` is 1; `0` if none.
    pub fn masked_mse(&mut self, pred: Var, target: &Array2<f64>, mask: &Array2<f64>) -> Var {
        let diff = (self.value(pred) - target) * mask;
        let count = mask.sum();
        let loss = if count > 0.0 {
            diff.iter().map(|d| d * d).sum::<f64>() / count
        } else {
            0.0
        };
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::MaskedMse {
                pred,
                diff,
                mask: mask.clone(),
                count,
            },
        )
    }

    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let mut v = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            v += self.value(p);
        }
        self.push(v, Op::Sum(parts.to_vec()))
    }

    /// Reverse sweep from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.values.len()];
        grads[output.0] = Some(Array2::ones(self.values[output.0].dim()));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&self.values[b.0].t()));
                    acc(&mut grads, *b, self.values[a.0].t().dot(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g.clone());
                }
                Op::Scale(a, k) => acc(&mut grads, *a, &g * *k),
                Op::Gelu(a) => {
                    let d = &self.values[a.0].mapv(gelu_grad) * &g;
                    acc(&mut grads, *a, d);
                }
                Op::RmsNorm { x, gain, inv_rms } => {
                    let xv = &self.values[x.0];
                    let gv = self.values[gain.0].row(0);
                    let n = xv.ncols() as f64;
                    let mut dx = Array2::zeros(xv.dim());
                    let mut dgain = Array2::zeros((1, xv.ncols()));
                    for (r, &ir) in inv_rms.iter().enumerate() {
                        let xr = xv.row(r);
                        let gr = g.row(r);
                        let mut proj = 0.0;
                        for j in 0..xv.ncols() {
                            proj += gr[j] * gv[j] * xr[j];
                            dgain[(0, j)] += gr[j] * xr[j] * ir;
                        }
                        let c = ir * ir * ir * proj / n;
                        for j in 0..xv.ncols() {
                            dx[(r, j)] = ir * gv[j] * gr[j] - xr[j] * c;
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gain, dgain);
                }
                Op::CausalSoftmax(a) => {
                    let p = &self.values[i];
                    let mut d = p * &g;
                    for (mut row, prow) in d.rows_mut().into_iter().zip(p.rows()) {
                        let dot: f64 = row.sum();
                        row.zip_mut_with(&prow, |dv, &pv| *dv -= pv * dot);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.values[p.0].nrows();
                        acc(&mut grads, *p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut full = Array2::zeros(self.values[a.0].dim());
                    full.slice_mut(s![*start..*start + g.nrows(), ..])
                        .assign(&g);
                    acc(&mut grads, *a, full);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.values[p.0].ncols();
                        acc(&mut grads, *p, g.slice(s![.., start..start + n]).to_owned());
                        start += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut full = Array2::zeros(self.values[a.0].dim());
                    full.slice_mut(s![.., *start..*start + g.ncols()])
                        .assign(&g);
                    acc(&mut grads, *a, full);
                }
                Op::Gather(table, ids) => {
                    let mut full = Array2::zeros(self.values[table.0].dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = full.row_mut(id);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *table, full);
                }
                Op::MaskedMse {
                    pred,
                    diff,
                    mask,
                    count,
                } => {
                    if *count > 0.0 {
                        let k = 2.0 * g[(0, 0)] / count;
                        acc(&mut grads, *pred, diff * mask * k);
                    }
                }
                Op::Sum(parts) => {
                    for p in parts {
                        acc(&mut grads, *p, g.clone());
                    }
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    /// Parameter ids bound in this graph with their nodes.
    pub fn params(&self) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.ops.iter().enumerate().filter_map(|(i, op)| match op {
            Op::Param(id) => Some((*id, Var(i))),
            _ => None,
        })
    }
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}
