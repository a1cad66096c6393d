//! Layers shared by the encoder and decoder: linear maps, LSTM and GRU
//! cells, a length-aware BiLSTM, the gated `Fuse` unit and dropout.

use rand::Rng;

use crate::error::Result;
use crate::rng::SeededRng;
use crate::tensor::{ModelParams, Tensor};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Option<Tensor>,
}

impl Linear {
    pub fn new(
        params: &mut ModelParams,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = params.matrix(format!("{name}.W"), d_in, d_out, rng)?;
        let b = if bias { Some(params.bias(format!("{name}.b"), d_out)?) } else { None };
        Ok(Linear { w, b })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.w)?;
        match &self.b {
            Some(b) => y.add_row(b),
            None => Ok(y),
        }
    }
}

/// Standard LSTM cell with gate order `i, f, g, o`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(params: &mut ModelParams, name: &str, d_in: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(LstmCell {
            w_x: params.matrix(format!("{name}.W_x"), d_in, 4 * hidden, rng)?,
            w_h: params.matrix(format!("{name}.W_h"), hidden, 4 * hidden, rng)?,
            b: params.bias(format!("{name}.b"), 4 * hidden)?,
            hidden,
        })
    }

    /// One step over a batch of rows; returns `(h', c')`.
    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let k = self.hidden;
        let pre = x.matmul(&self.w_x)?.add(&h.matmul(&self.w_h)?)?.add_row(&self.b)?;
        let i = pre.slice_cols(0, k)?.sigmoid();
        let f = pre.slice_cols(k, 2 * k)?.sigmoid();
        let g = pre.slice_cols(2 * k, 3 * k)?.tanh();
        let o = pre.slice_cols(3 * k, 4 * k)?.sigmoid();
        let c_new = f.mul(c)?.add(&i.mul(&g)?)?;
        let h_new = o.mul(&c_new.tanh())?;
        Ok((h_new, c_new))
    }
}

/// GRU cell: `h' = (1 - u) * n + u * h`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b_x: Tensor,
    pub b_h: Tensor,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(params: &mut ModelParams, name: &str, d: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(GruCell {
            w_x: params.matrix(format!("{name}.W_x"), d, 3 * d, rng)?,
            w_h: params.matrix(format!("{name}.W_h"), d, 3 * d, rng)?,
            b_x: params.bias(format!("{name}.b_x"), 3 * d)?,
            b_h: params.bias(format!("{name}.b_h"), 3 * d)?,
            hidden: d,
        })
    }

    pub fn step(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let d = self.hidden;
        let gx = x.matmul(&self.w_x)?.add_row(&self.b_x)?;
        let gh = h.matmul(&self.w_h)?.add_row(&self.b_h)?;
        let r = gx.slice_cols(0, d)?.add(&gh.slice_cols(0, d)?)?.sigmoid();
        let u = gx.slice_cols(d, 2 * d)?.add(&gh.slice_cols(d, 2 * d)?)?.sigmoid();
        let n = gx.slice_cols(2 * d, 3 * d)?.add(&r.mul(&gh.slice_cols(2 * d, 3 * d)?)?)?.tanh();
        Tensor::gated_mix(&u, h, &n)
    }
}

/// Gated sum `z * a + (1 - z) * b` with `z = sigmoid([a; b; a*b; a-b] W_z + b_z)`.
#[derive(Debug, Clone)]
pub struct Fuse {
    pub w_z: Tensor,
    pub b_z: Tensor,
}

impl Fuse {
    pub fn new(params: &mut ModelParams, name: &str, d: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Fuse {
            w_z: params.matrix(format!("{name}.W_z"), 4 * d, d, rng)?,
            b_z: params.bias(format!("{name}.b_z"), d)?,
        })
    }

    pub fn gate(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let feats = Tensor::concat_cols(&[a.clone(), b.clone(), a.mul(b)?, a.sub(b)?])?;
        Ok(feats.matmul(&self.w_z)?.add_row(&self.b_z)?.sigmoid())
    }

    pub fn forward(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Tensor::gated_mix(&self.gate(a, b)?, a, b)
    }
}

/// Inverted dropout plus the coin flips scheduled sampling needs. Without
/// an RNG (evaluation) inputs pass through unchanged.
pub struct Dropout<'a> {
    p: f64,
    rng: Option<&'a mut SeededRng>,
}

impl<'a> Dropout<'a> {
    pub fn off() -> Self {
        Dropout { p: 0.0, rng: None }
    }

    pub fn train(p: f64, rng: &'a mut SeededRng) -> Self {
        Dropout { p, rng: Some(rng) }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply(&mut self, x: &Tensor) -> Result<Tensor> {
        let Some(rng) = self.rng.as_deref_mut() else { return Ok(x.clone()) };
        if self.p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.len()).map(|_| if rng.gen::<f64>() < self.p { 0.0 } else { keep }).collect();
        x.mul(&Tensor::from_vec(x.rows(), x.cols(), mask)?)
    }

    /// True with probability `p`; always true when not training.
    pub fn coin(&mut self, p: f64) -> bool {
        match self.rng.as_deref_mut() {
            Some(rng) if p < 1.0 => rng.gen::<f64>() < p,
            _ => true,
        }
    }
}

/// Bidirectional LSTM; each direction has `d / 2` hidden units.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

/// Per-sequence outputs of [`BiLstm::run`].
pub struct BiLstmOutput {
    /// `n x d`: `[forward_last; backward_first]` per sequence, input order.
    pub finals: Tensor,
    /// Forward states at each step, over the active (length-sorted) rows.
    fwd_steps: Vec<Tensor>,
    bwd_steps: Vec<Tensor>,
    order: Vec<usize>,
    lengths: Vec<usize>,
}

impl BiLstmOutput {
    /// `L x d` per-position states `[forward_t; backward_t]` of sequence `s`.
    pub fn states(&self, s: usize) -> Result<Tensor> {
        let row = self.order.iter().position(|&o| o == s).expect("sequence in batch");
        let len = self.lengths[s];
        let mut rows = Vec::with_capacity(len);
        for t in 0..len {
            let f = self.fwd_steps[t].slice_rows(row, row + 1)?;
            let b = self.bwd_steps[len - 1 - t].slice_rows(row, row + 1)?;
            rows.push(Tensor::concat_cols(&[f, b])?);
        }
        Tensor::concat_rows(&rows)
    }
}

impl BiLstm {
    pub fn new(params: &mut ModelParams, name: &str, d_in: usize, d: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(BiLstm {
            fwd: LstmCell::new(params, &format!("{name}.fwd"), d_in, d / 2, rng)?,
            bwd: LstmCell::new(params, &format!("{name}.bwd"), d_in, d / 2, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    /// Runs both directions over a batch of nonempty token sequences.
    /// `embed` maps a row of token ids to a matrix of input vectors.
    pub fn run(&self, seqs: &[Vec<usize>], embed: &mut dyn FnMut(&[usize]) -> Result<Tensor>) -> Result<BiLstmOutput> {
        let lengths: Vec<usize> = seqs.iter().map(Vec::len).collect();
        debug_assert!(lengths.iter().all(|&l| l > 0));
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]).then(a.cmp(&b)));
        let sorted: Vec<&[usize]> = order.iter().map(|&i| seqs[i].as_slice()).collect();

        let fwd_steps = run_direction(&self.fwd, &sorted, false, embed)?;
        let bwd_steps = run_direction(&self.bwd, &sorted, true, embed)?;

        // Final states: forward at the last valid step, backward at the
        // step that consumed position 0, which is also its last step.
        let n = seqs.len();
        let mut final_f = vec![None; n];
        let mut final_b = vec![None; n];
        for (row, &s) in order.iter().enumerate() {
            let t = lengths[s] - 1;
            final_f[s] = Some(fwd_steps[t].slice_rows(row, row + 1)?);
            final_b[s] = Some(bwd_steps[t].slice_rows(row, row + 1)?);
        }
        let rows: Vec<Tensor> = (0..n)
            .map(|s| {
                Tensor::concat_cols(&[
                    final_f[s].take().expect("forward final"),
                    final_b[s].take().expect("backward final"),
                ])
            })
            .collect::<Result<_>>()?;
        Ok(BiLstmOutput { finals: Tensor::concat_rows(&rows)?, fwd_steps, bwd_steps, order, lengths })
    }
}

/// Step outputs of one direction. Sequences are sorted by decreasing
/// length, so the rows still running at step `t` form a prefix; the
/// returned tensor for step `t` has one row per sequence in sorted order,
/// with finished rows frozen at their last state.
fn run_direction(
    cell: &LstmCell,
    seqs: &[&[usize]],
    reverse: bool,
    embed: &mut dyn FnMut(&[usize]) -> Result<Tensor>,
) -> Result<Vec<Tensor>> {
    let n = seqs.len();
    let max_len = seqs.first().map_or(0, |s| s.len());
    let mut h = Tensor::zeros(n, cell.hidden);
    let mut c = Tensor::zeros(n, cell.hidden);
    let mut steps = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let active = seqs.iter().take_while(|s| s.len() > t).count();
        let ids: Vec<usize> = seqs[..active].iter().map(|s| if reverse { s[s.len() - 1 - t] } else { s[t] }).collect();
        let x = embed(&ids)?;
        let (h_act, c_act) = if active == n {
            cell.step(&x, &h, &c)?
        } else {
            cell.step(&x, &h.slice_rows(0, active)?, &c.slice_rows(0, active)?)?
        };
        if active == n {
            h = h_act;
            c = c_act;
        } else {
            h = Tensor::concat_rows(&[h_act, h.slice_rows(active, n)?])?;
            c = Tensor::concat_rows(&[c_act, c.slice_rows(active, n)?])?;
        }
        steps.push(h.clone());
    }
    Ok(steps)
}
