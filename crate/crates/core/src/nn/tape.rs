//! Operation tape over whole tensors. The forward pass appends one node per
//! layer application; the backward pass walks the nodes in reverse and
//! accumulates adjoints for activations and parameter groups.

use alloc::vec;
use alloc::vec::Vec;

use super::mp::{self, mp_silu_grad};
use super::ops;
use super::params::{Gradients, ParamGroup};
use crate::Tensor;

pub(crate) type NodeId = usize;

enum Op {
    Leaf,
    Conv {
        x: NodeId,
        weight: usize,
        gain: Option<usize>,
        k: usize,
    },
    Silu {
        x: NodeId,
    },
    Sum {
        a: NodeId,
        b: NodeId,
        wa: f64,
        wb: f64,
    },
    Cat {
        a: NodeId,
        b: NodeId,
        wa: f64,
        wb: f64,
    },
    PixelNorm {
        x: NodeId,
    },
    Down {
        x: NodeId,
    },
    Up {
        x: NodeId,
    },
    /// `x * (1 + c)` with `c` broadcast over pixels.
    Modulate {
        x: NodeId,
        c: NodeId,
    },
    Attention {
        qkv: NodeId,
        heads: usize,
    },
    Clip {
        x: NodeId,
        limit: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub(crate) struct Tape<'p> {
    params: &'p [ParamGroup],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [ParamGroup]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn into_value(mut self, id: NodeId) -> Tensor {
        core::mem::replace(&mut self.nodes[id].value, Tensor::zeros(0, 0, 0, 0))
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    fn gain_value(&self, gain: Option<usize>) -> f64 {
        gain.map_or(1.0, |g| self.params[g].data[0])
    }

    pub fn conv(&mut self, x: NodeId, weight: usize, gain: Option<usize>, k: usize) -> NodeId {
        let group = &self.params[weight];
        let fan_in = group.fan_in();
        let cout = group.shape[0];
        let w = mp::effective_weight(&group.data, fan_in, self.gain_value(gain));
        let out = ops::conv2d(self.value(x), &w, cout, k);
        self.push(out, Op::Conv { x, weight, gain, k })
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let out = mp::mp_silu(self.value(x));
        self.push(out, Op::Silu { x })
    }

    pub fn sum(&mut self, a: NodeId, b: NodeId, blend: f64) -> NodeId {
        let (wa, wb) = mp::mp_sum_weights(blend);
        let mut out = self.value(a).clone();
        for (o, &v) in out.data.iter_mut().zip(&self.value(b).data) {
            *o = wa * *o + wb * v;
        }
        self.push(out, Op::Sum { a, b, wa, wb })
    }

    pub fn cat(&mut self, a: NodeId, b: NodeId, blend: f64) -> NodeId {
        let (wa, wb) = mp::mp_concat_weights(self.value(a).c, self.value(b).c, blend);
        let out = Tensor::concat_channels(self.value(a), wa, self.value(b), wb);
        self.push(out, Op::Cat { a, b, wa, wb })
    }

    pub fn pixel_norm(&mut self, x: NodeId) -> NodeId {
        let out = ops::pixel_norm(self.value(x));
        self.push(out, Op::PixelNorm { x })
    }

    pub fn down(&mut self, x: NodeId) -> NodeId {
        let out = ops::avg_down(self.value(x));
        self.push(out, Op::Down { x })
    }

    pub fn up(&mut self, x: NodeId) -> NodeId {
        let out = ops::up_nearest(self.value(x));
        self.push(out, Op::Up { x })
    }

    pub fn modulate(&mut self, x: NodeId, c: NodeId) -> NodeId {
        let xv = self.value(x);
        let cv = self.value(c);
        let p = xv.plane();
        let mut out = xv.clone();
        for (plane, chunk) in out.data.chunks_exact_mut(p).enumerate() {
            let s = 1.0 + cv.data[plane];
            chunk.iter_mut().for_each(|v| *v *= s);
        }
        self.push(out, Op::Modulate { x, c })
    }

    pub fn attention(&mut self, qkv: NodeId, heads: usize) -> NodeId {
        let out = ops::attention(self.value(qkv), heads);
        self.push(out, Op::Attention { qkv, heads })
    }

    pub fn clip(&mut self, x: NodeId, limit: f64) -> NodeId {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(-limit, limit));
        self.push(out, Op::Clip { x, limit })
    }

    /// Backpropagates `seed` (the adjoint of node `output`) to every parameter.
    pub fn backward(&self, output: NodeId, seed: Tensor) -> Gradients {
        let mut grads = Gradients::zeros_for(self.params);
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[output] = Some(seed);
        for id in (0..=output).rev() {
            let Some(g) = adj[id].take() else { continue };
            match self.nodes[id].op {
                Op::Leaf => {}
                Op::Conv { x, weight, gain, k } => {
                    let group = &self.params[weight];
                    let fan_in = group.fan_in();
                    let gv = self.gain_value(gain);
                    let w = mp::effective_weight(&group.data, fan_in, gv);
                    let (dx, dw) = ops::conv2d_backward(self.value(x), &w, &g, k);
                    let dgain = mp::effective_weight_backward(
                        &group.data,
                        fan_in,
                        gv,
                        &dw,
                        grads.group_mut(weight),
                    );
                    if let Some(gi) = gain {
                        grads.group_mut(gi)[0] += dgain;
                    }
                    accumulate(&mut adj, x, dx);
                }
                Op::Silu { x } => {
                    let mut dx = g;
                    for (d, &v) in dx.data.iter_mut().zip(&self.value(x).data) {
                        *d *= mp_silu_grad(v);
                    }
                    accumulate(&mut adj, x, dx);
                }
                Op::Sum { a, b, wa, wb } => {
                    let mut da = g.clone();
                    da.scale(wa);
                    let mut db = g;
                    db.scale(wb);
                    accumulate(&mut adj, a, da);
                    accumulate(&mut adj, b, db);
                }
                Op::Cat { a, b, wa, wb } => {
                    let (da, db) = g.split_channels(self.value(a).c, wa, wb);
                    accumulate(&mut adj, a, da);
                    accumulate(&mut adj, b, db);
                }
                Op::PixelNorm { x } => {
                    let dx = ops::pixel_norm_backward(self.value(x), &g);
                    accumulate(&mut adj, x, dx);
                }
                Op::Down { x } => accumulate(&mut adj, x, ops::avg_down_backward(&g)),
                Op::Up { x } => accumulate(&mut adj, x, ops::up_nearest_backward(&g)),
                Op::Modulate { x, c } => {
                    let xv = self.value(x);
                    let cv = self.value(c);
                    let p = xv.plane();
                    let mut dx = g.clone();
                    let mut dc = cv.zeros_like();
                    for (plane, (dchunk, xchunk)) in dx
                        .data
                        .chunks_exact_mut(p)
                        .zip(xv.data.chunks_exact(p))
                        .enumerate()
                    {
                        let s = 1.0 + cv.data[plane];
                        let mut acc = 0.0;
                        for (d, &xvv) in dchunk.iter_mut().zip(xchunk) {
                            acc += *d * xvv;
                            *d *= s;
                        }
                        dc.data[plane] = acc;
                    }
                    accumulate(&mut adj, x, dx);
                    accumulate(&mut adj, c, dc);
                }
                Op::Attention { qkv, heads } => {
                    let dq = ops::attention_backward(self.value(qkv), heads, &g);
                    accumulate(&mut adj, qkv, dq);
                }
                Op::Clip { x, limit } => {
                    let mut dx = g;
                    for (d, &v) in dx.data.iter_mut().zip(&self.value(x).data) {
                        if v.abs() > limit {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut adj, x, dx);
                }
            }
        }
        grads
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut adj[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
