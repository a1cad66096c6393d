use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use super::{matmul_raw, transpose_raw, Op, Tensor};
use crate::error::{Error, Result};

fn key(t: &Tensor) -> usize {
    Rc::as_ptr(&t.0) as usize
}

/// Reverse topological order (loss first) of every grad-tracked tensor
/// reachable from `root`.
fn reverse_topo(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !seen.insert(key(&node)) {
            continue;
        }
        stack.push((node.clone(), true));
        for input in node.0.op.inputs() {
            if input.requires_grad() && !seen.contains(&key(input)) {
                stack.push((input.clone(), false));
            }
        }
    }
    order.reverse();
    order
}

impl Tensor {
    /// Accumulates d(self)/d(x) into the `grad` buffer of every tracked
    /// tensor `x` the scalar `self` depends on.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", self.shape())));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = reverse_topo(self);
        let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
        pending.insert(key(self), vec![1.0]);
        for node in &order {
            let Some(g) = pending.remove(&key(node)) else {
                continue;
            };
            propagate(node, &g, &mut pending);
            let mut slot = node.0.grad.borrow_mut();
            match slot.as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }
}

fn accumulate(pending: &mut HashMap<usize, Vec<f64>>, t: &Tensor, g: Vec<f64>) {
    if !t.requires_grad() {
        return;
    }
    match pending.get_mut(&key(t)) {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => {
            pending.insert(key(t), g);
        }
    }
}

fn propagate(node: &Tensor, g: &[f64], pending: &mut HashMap<usize, Vec<f64>>) {
    let (rows, cols) = node.shape();
    match &node.0.op {
        Op::Leaf => {}
        Op::Matmul(a, b) => {
            let (m, k) = a.shape();
            let n = b.cols();
            if a.requires_grad() {
                let bt = transpose_raw(&b.data(), k, n);
                accumulate(pending, a, matmul_raw(g, &bt, m, n, k));
            }
            if b.requires_grad() {
                let at = transpose_raw(&a.data(), m, k);
                accumulate(pending, b, matmul_raw(&at, g, k, m, n));
            }
        }
        Op::Transpose(a) => accumulate(pending, a, transpose_raw(g, rows, cols)),
        Op::Add(a, b) => {
            accumulate(pending, a, g.to_vec());
            accumulate(pending, b, g.to_vec());
        }
        Op::AddRow(a, r) => {
            accumulate(pending, a, g.to_vec());
            if r.requires_grad() {
                let mut acc = vec![0.0; cols];
                for row in g.chunks(cols) {
                    acc.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                accumulate(pending, r, acc);
            }
        }
        Op::Sub(a, b) => {
            accumulate(pending, a, g.to_vec());
            accumulate(pending, b, g.iter().map(|x| -x).collect());
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                let bd = b.data();
                accumulate(pending, a, g.iter().zip(bd.iter()).map(|(x, y)| x * y).collect());
            }
            if b.requires_grad() {
                let ad = a.data();
                accumulate(pending, b, g.iter().zip(ad.iter()).map(|(x, y)| x * y).collect());
            }
        }
        Op::Affine(a, factor) => accumulate(pending, a, g.iter().map(|x| x * factor).collect()),
        Op::Relu(a) => {
            let ad = a.data();
            let d = g.iter().zip(ad.iter()).map(|(&x, &v)| if v > 0.0 { x } else { 0.0 }).collect();
            drop(ad);
            accumulate(pending, a, d);
        }
        Op::Sigmoid(a) => {
            let y = node.data();
            let d = g.iter().zip(y.iter()).map(|(&x, &s)| x * s * (1.0 - s)).collect();
            drop(y);
            accumulate(pending, a, d);
        }
        Op::Tanh(a) => {
            let y = node.data();
            let d = g.iter().zip(y.iter()).map(|(&x, &t)| x * (1.0 - t * t)).collect();
            drop(y);
            accumulate(pending, a, d);
        }
        Op::SoftmaxRows(a) => {
            let y = node.data();
            let mut d = vec![0.0; g.len()];
            for ((drow, grow), yrow) in d.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                let dot: f64 = grow.iter().zip(yrow).map(|(x, s)| x * s).sum();
                for ((o, &x), &s) in drow.iter_mut().zip(grow).zip(yrow) {
                    *o = s * (x - dot);
                }
            }
            drop(y);
            accumulate(pending, a, d);
        }
        Op::LogSoftmaxRows(a) => {
            let y = node.data();
            let mut d = vec![0.0; g.len()];
            for ((drow, grow), yrow) in d.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                let total: f64 = grow.iter().sum();
                for ((o, &x), &ls) in drow.iter_mut().zip(grow).zip(yrow) {
                    *o = x - ls.exp() * total;
                }
            }
            drop(y);
            accumulate(pending, a, d);
        }
        Op::SumAll(a) => accumulate(pending, a, vec![g[0]; a.len()]),
        Op::MaxRows(a, arg) => {
            let n = a.cols();
            let mut d = vec![0.0; a.len()];
            for (c, &r) in arg.iter().enumerate() {
                d[r * n + c] = g[c];
            }
            accumulate(pending, a, d);
        }
        Op::ConcatCols(parts) => {
            let mut offset = 0;
            for p in parts {
                let w = p.cols();
                if p.requires_grad() {
                    let mut d = Vec::with_capacity(p.len());
                    for r in 0..rows {
                        d.extend_from_slice(&g[r * cols + offset..r * cols + offset + w]);
                    }
                    accumulate(pending, p, d);
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = p.len();
                if p.requires_grad() {
                    accumulate(pending, p, g[offset..offset + len].to_vec());
                }
                offset += len;
            }
        }
        Op::SliceCols(a, start) => {
            let n = a.cols();
            let mut d = vec![0.0; a.len()];
            for r in 0..rows {
                d[r * n + start..r * n + start + cols].copy_from_slice(&g[r * cols..(r + 1) * cols]);
            }
            accumulate(pending, a, d);
        }
        Op::SliceRows(a, start) => {
            let mut d = vec![0.0; a.len()];
            d[start * cols..start * cols + g.len()].copy_from_slice(g);
            accumulate(pending, a, d);
        }
        Op::GatherRows(a, index) => {
            let mut d = vec![0.0; a.len()];
            for (r, &src) in index.iter().enumerate() {
                let dst = &mut d[src * cols..(src + 1) * cols];
                dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(a, b)| *a += b);
            }
            accumulate(pending, a, d);
        }
        Op::BlendRows(a, b, mask) => {
            let mut da = vec![0.0; g.len()];
            let mut db = vec![0.0; g.len()];
            for (r, &keep) in mask.iter().enumerate() {
                let dst = if keep { &mut da } else { &mut db };
                dst[r * cols..(r + 1) * cols].copy_from_slice(&g[r * cols..(r + 1) * cols]);
            }
            accumulate(pending, a, da);
            accumulate(pending, b, db);
        }
        Op::GatedMix(z, a, b) => {
            let (zd, ad, bd) = (z.data(), a.data(), b.data());
            let dz = g.iter().zip(ad.iter().zip(bd.iter())).map(|(&x, (&p, &q))| x * (p - q)).collect();
            let da = g.iter().zip(zd.iter()).map(|(&x, &s)| x * s).collect();
            let db = g.iter().zip(zd.iter()).map(|(&x, &s)| x * (1.0 - s)).collect();
            drop((zd, ad, bd));
            accumulate(pending, z, dz);
            accumulate(pending, a, da);
            accumulate(pending, b, db);
        }
        Op::Pick(a, index) => {
            let n = a.cols();
            let mut d = vec![0.0; a.len()];
            for (r, &c) in index.iter().enumerate() {
                d[r * n + c] = g[r];
            }
            accumulate(pending, a, d);
        }
        Op::PairGather(a, index) => {
            let (m, c) = a.shape();
            let mut d = vec![0.0; a.len()];
            for (p, k) in index.iter().enumerate() {
                if let Some(k) = k {
                    d[(p / m) * c + k] += g[p];
                }
            }
            accumulate(pending, a, d);
        }
        Op::PairTypeMass(a, types) => {
            let m = types.m;
            let k = cols;
            let mut d = vec![0.0; a.len()];
            for v in 0..m {
                for j in 0..m {
                    let bits = types.get(v, j);
                    if bits == 0 {
                        continue;
                    }
                    d[v * m + j] = (0..k).filter(|t| bits & (1 << t) != 0).map(|t| g[v * k + t]).sum();
                }
            }
            accumulate(pending, a, d);
        }
    }
}
