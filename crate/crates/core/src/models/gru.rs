//! Single-layer GRU language model with hand-written BPTT.
//!
//! Every token of a sentence is predicted. Step 0 sees a zero input and a
//! zero state; step t > 0 sees the embedding of token t-1.
//!
//! ```text
//! z = σ(W_z x + U_z h + b_z)
//! r = σ(W_r x + U_r h + b_r)
//! c = tanh(W_c x + U_c (r ⊙ h) + b_c)
//! h' = z ⊙ h + (1 - z) ⊙ c
//! p = softmax(W_out h' + b_out)
//! ```

use alloc::vec;
use alloc::vec::Vec;

use super::{matvec_acc, matvec_t_acc, outer_acc, softmax, split_segments_mut};
use crate::numerics::ParamVector;

pub(super) fn segments(vocab: usize, embed: usize, hidden: usize) -> Vec<(&'static str, usize, usize)> {
    let gate_in = embed + hidden;
    vec![
        ("b_c", hidden, gate_in),
        ("b_out", vocab, hidden),
        ("b_r", hidden, gate_in),
        ("b_z", hidden, gate_in),
        ("emb", vocab * embed, 1),
        ("u_c", hidden * hidden, hidden),
        ("u_r", hidden * hidden, hidden),
        ("u_z", hidden * hidden, hidden),
        ("w_c", hidden * embed, embed),
        ("w_out", vocab * hidden, hidden),
        ("w_r", hidden * embed, embed),
        ("w_z", hidden * embed, embed),
    ]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

struct Gru<'a> {
    vocab: usize,
    embed: usize,
    hidden: usize,
    emb: &'a [f64],
    w_z: &'a [f64],
    w_r: &'a [f64],
    w_c: &'a [f64],
    u_z: &'a [f64],
    u_r: &'a [f64],
    u_c: &'a [f64],
    b_z: &'a [f64],
    b_r: &'a [f64],
    b_c: &'a [f64],
    w_out: &'a [f64],
    b_out: &'a [f64],
}

/// Activations of one sentence, kept for the backward pass.
#[derive(Default)]
struct Trace {
    /// (len + 1) × hidden, row 0 is the initial zero state.
    hs: Vec<f64>,
    zs: Vec<f64>,
    rs: Vec<f64>,
    cs: Vec<f64>,
    /// r ⊙ h_prev per step.
    rh: Vec<f64>,
    probs: Vec<f64>,
    logits: Vec<f64>,
}

impl<'a> Gru<'a> {
    fn new(p: &'a ParamVector, vocab: usize, embed: usize, hidden: usize) -> Self {
        let s = |n| p.segment(n).expect("gru layout");
        Self {
            vocab,
            embed,
            hidden,
            emb: s("emb"),
            w_z: s("w_z"),
            w_r: s("w_r"),
            w_c: s("w_c"),
            u_z: s("u_z"),
            u_r: s("u_r"),
            u_c: s("u_c"),
            b_z: s("b_z"),
            b_r: s("b_r"),
            b_c: s("b_c"),
            w_out: s("w_out"),
            b_out: s("b_out"),
        }
    }

    fn input(&self, seq: &[u32], t: usize) -> Option<&'a [f64]> {
        (t > 0).then(|| {
            let tok = seq[t - 1] as usize;
            &self.emb[tok * self.embed..(tok + 1) * self.embed]
        })
    }

    fn forward(&self, seq: &[u32], tr: &mut Trace) -> f64 {
        let (h_dim, v) = (self.hidden, self.vocab);
        let len = seq.len();
        tr.hs.clear();
        tr.hs.resize((len + 1) * h_dim, 0.0);
        for buf in [&mut tr.zs, &mut tr.rs, &mut tr.cs, &mut tr.rh] {
            buf.clear();
            buf.resize(len * h_dim, 0.0);
        }
        tr.probs.clear();
        tr.probs.resize(len * v, 0.0);
        tr.logits.resize(v, 0.0);

        let mut loss = 0.0;
        for t in 0..len {
            let x = self.input(seq, t);
            let (prev, rest) = tr.hs.split_at_mut((t + 1) * h_dim);
            let h_prev = &prev[t * h_dim..];
            let h = &mut rest[..h_dim];
            let at = t * h_dim..(t + 1) * h_dim;

            let z = &mut tr.zs[at.clone()];
            z.copy_from_slice(self.b_z);
            matvec_acc(self.u_z, h_dim, h_prev, z);
            let r = &mut tr.rs[at.clone()];
            r.copy_from_slice(self.b_r);
            matvec_acc(self.u_r, h_dim, h_prev, r);
            let c = &mut tr.cs[at.clone()];
            c.copy_from_slice(self.b_c);
            if let Some(x) = x {
                matvec_acc(self.w_z, self.embed, x, z);
                matvec_acc(self.w_r, self.embed, x, r);
                matvec_acc(self.w_c, self.embed, x, c);
            }
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            r.iter_mut().for_each(|v| *v = sigmoid(*v));
            let rh = &mut tr.rh[at.clone()];
            for ((o, &ri), &hi) in rh.iter_mut().zip(r.iter()).zip(h_prev) {
                *o = ri * hi;
            }
            matvec_acc(self.u_c, h_dim, rh, c);
            c.iter_mut().for_each(|v| *v = libm::tanh(*v));
            for i in 0..h_dim {
                h[i] = z[i] * h_prev[i] + (1.0 - z[i]) * c[i];
            }

            tr.logits.copy_from_slice(self.b_out);
            matvec_acc(self.w_out, h_dim, h, &mut tr.logits);
            let lse = softmax(&tr.logits, &mut tr.probs[t * v..(t + 1) * v]);
            loss += lse - tr.logits[seq[t] as usize];
        }
        loss
    }
}

pub(super) fn loss(params: &ParamVector, seqs: &[Vec<u32>], vocab: usize, embed: usize, hidden: usize) -> f64 {
    let gru = Gru::new(params, vocab, embed, hidden);
    let mut tr = Trace::default();
    seqs.iter().map(|s| gru.forward(s, &mut tr)).sum()
}

pub(super) fn loss_grad(
    params: &ParamVector,
    seqs: &[Vec<u32>],
    grad: &mut ParamVector,
    vocab: usize,
    embed: usize,
    hidden: usize,
) -> f64 {
    let gru = Gru::new(params, vocab, embed, hidden);
    let layout = grad.layout().clone();
    let parts: [&mut [f64]; 12] = split_segments_mut(&layout, grad.as_mut_slice())
        .try_into()
        .unwrap_or_else(|_| unreachable!("gru layout has 12 segments"));
    let [db_c, db_out, db_r, db_z, demb, du_c, du_r, du_z, dw_c, dw_out, dw_r, dw_z] = parts;

    let h_dim = hidden;
    let mut tr = Trace::default();
    let mut dlogits = vec![0.0; vocab];
    let (mut dh, mut dh_next, mut dh_prev) = (vec![0.0; h_dim], vec![0.0; h_dim], vec![0.0; h_dim]);
    let (mut da_z, mut da_r, mut da_c, mut drh) =
        (vec![0.0; h_dim], vec![0.0; h_dim], vec![0.0; h_dim], vec![0.0; h_dim]);
    let mut dx = vec![0.0; embed];
    let mut total = 0.0;

    for seq in seqs {
        total += gru.forward(seq, &mut tr);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..seq.len()).rev() {
            let at = t * h_dim..(t + 1) * h_dim;
            let h_prev = &tr.hs[at.clone()];
            let h = &tr.hs[(t + 1) * h_dim..(t + 2) * h_dim];
            let (z, r, c, rh) = (&tr.zs[at.clone()], &tr.rs[at.clone()], &tr.cs[at.clone()], &tr.rh[at]);

            dlogits.copy_from_slice(&tr.probs[t * vocab..(t + 1) * vocab]);
            dlogits[seq[t] as usize] -= 1.0;
            outer_acc(dw_out, h_dim, &dlogits, h);
            db_out.iter_mut().zip(&dlogits).for_each(|(d, g)| *d += g);

            dh.copy_from_slice(&dh_next);
            matvec_t_acc(gru.w_out, h_dim, &dlogits, &mut dh);

            for i in 0..h_dim {
                let dz = dh[i] * (h_prev[i] - c[i]);
                let dc = dh[i] * (1.0 - z[i]);
                dh_prev[i] = dh[i] * z[i];
                da_c[i] = dc * (1.0 - c[i] * c[i]);
                da_z[i] = dz * z[i] * (1.0 - z[i]);
            }
            outer_acc(du_c, h_dim, &da_c, rh);
            db_c.iter_mut().zip(&da_c).for_each(|(d, g)| *d += g);
            drh.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(gru.u_c, h_dim, &da_c, &mut drh);
            for i in 0..h_dim {
                let dr = drh[i] * h_prev[i];
                dh_prev[i] += drh[i] * r[i];
                da_r[i] = dr * r[i] * (1.0 - r[i]);
            }
            outer_acc(du_r, h_dim, &da_r, h_prev);
            db_r.iter_mut().zip(&da_r).for_each(|(d, g)| *d += g);
            matvec_t_acc(gru.u_r, h_dim, &da_r, &mut dh_prev);
            outer_acc(du_z, h_dim, &da_z, h_prev);
            db_z.iter_mut().zip(&da_z).for_each(|(d, g)| *d += g);
            matvec_t_acc(gru.u_z, h_dim, &da_z, &mut dh_prev);

            if let Some(x) = gru.input(seq, t) {
                outer_acc(dw_c, embed, &da_c, x);
                outer_acc(dw_r, embed, &da_r, x);
                outer_acc(dw_z, embed, &da_z, x);
                dx.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(gru.w_c, embed, &da_c, &mut dx);
                matvec_t_acc(gru.w_r, embed, &da_r, &mut dx);
                matvec_t_acc(gru.w_z, embed, &da_z, &mut dx);
                let tok = seq[t - 1] as usize;
                demb[tok * embed..(tok + 1) * embed]
                    .iter_mut()
                    .zip(&dx)
                    .for_each(|(d, g)| *d += g);
            }
            core::mem::swap(&mut dh_next, &mut dh_prev);
        }
    }
    total
}
