//! Reverse-mode autodiff over [`Tensor`] values.
//!
//! A [`Graph`] is a per-sample tape: forward ops append nodes, `backward`
//! walks the tape once and accumulates gradients for tracked leaves. The op
//! set is exactly what the reconstruction pipeline needs: 2-D convolution,
//! small dense layers, elementwise arithmetic, the CASSI forward/adjoint
//! pair, lattice permutations, and the loss reductions. Constants (inputs
//! that never need gradients) are skipped during the backward pass.
//!
//! Graphs built with `recording = false` compute identical values without
//! storing any backward state; inference and training share one code path.

use std::rc::Rc;

use crate::cube::CodedMask;
use crate::exec;
use crate::sensing;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&Tensor, &[&Tensor], &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackFn>,
    needs_grad: bool,
}

pub struct Graph {
    nodes: Vec<Node>,
    recording: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

impl Graph {
    pub fn new(recording: bool) -> Self {
        Graph {
            nodes: Vec::new(),
            recording,
        }
    }

    pub fn recording(&self) -> bool {
        self.recording
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Tracked leaf: gradients are accumulated for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_node(t, vec![], None, self.recording)
    }

    /// Untracked input: no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_node(t, vec![], None, false)
    }

    /// Copy of `v`'s value with the gradient path cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    fn push_node(
        &mut self,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackFn>,
        needs_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, parents: &[Var], backward: BackFn) -> Var {
        if !self.recording {
            return self.push_node(value, vec![], None, false);
        }
        let needs = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        let parent_ids = parents.iter().map(|p| p.0).collect();
        let backward = if needs { Some(backward) } else { None };
        self.push_node(value, parent_ids, backward, needs)
    }

    /// Run the backward pass from scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        assert!(self.recording, "backward on a non-recording graph");
        assert_eq!(self.nodes[loss.0].value.numel(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some(back) = &node.backward else { continue };
            // interior grads are consumed here; leaf grads stay for the caller
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let parent_vals: Vec<&Tensor> =
                node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let wants: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].needs_grad)
                .collect();
            let contribs = back(&gout, &parent_vals, &wants);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (&p, contrib) in node.parents.iter().zip(contribs) {
                if let Some(c) = contrib {
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&c),
                        slot @ None => *slot = Some(c),
                    }
                }
            }
        }
        Grads(grads)
    }

    // ---- elementwise arithmetic -------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let value = Tensor::from_vec(&ta.shape, data);
        self.push_op(
            value,
            &[a, b],
            Box::new(|g, _, wants| {
                vec![
                    wants[0].then(|| g.clone()),
                    wants[1].then(|| g.clone()),
                ]
            }),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "sub shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let value = Tensor::from_vec(&ta.shape, data);
        self.push_op(
            value,
            &[a, b],
            Box::new(|g, _, wants| {
                let gb = wants[1].then(|| {
                    let mut t = g.clone();
                    for v in t.data.iter_mut() {
                        *v = -*v;
                    }
                    t
                });
                vec![wants[0].then(|| g.clone()), gb]
            }),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "mul shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(&ta.shape, data);
        self.push_op(
            value,
            &[a, b],
            Box::new(|g, pv, wants| {
                let ga = wants[0].then(|| {
                    let d = g.data.iter().zip(&pv[1].data).map(|(g, b)| g * b).collect();
                    Tensor::from_vec(&g.shape, d)
                });
                let gb = wants[1].then(|| {
                    let d = g.data.iter().zip(&pv[0].data).map(|(g, a)| g * a).collect();
                    Tensor::from_vec(&g.shape, d)
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "div shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x / y).collect();
        let value = Tensor::from_vec(&ta.shape, data);
        self.push_op(
            value,
            &[a, b],
            Box::new(|g, pv, wants| {
                let ga = wants[0].then(|| {
                    let d = g.data.iter().zip(&pv[1].data).map(|(g, b)| g / b).collect();
                    Tensor::from_vec(&g.shape, d)
                });
                let gb = wants[1].then(|| {
                    let d = g
                        .data
                        .iter()
                        .zip(pv[0].data.iter().zip(&pv[1].data))
                        .map(|(g, (a, b))| -g * a / (b * b))
                        .collect();
                    Tensor::from_vec(&g.shape, d)
                });
                vec![ga, gb]
            }),
        )
    }

    /// `out = tensor + scalar` (broadcast). `scalar` must have one element.
    pub fn bcast_add_scalar(&mut self, scalar: Var, tensor: Var) -> Var {
        let s = self.nodes[scalar.0].value.item();
        let t = &self.nodes[tensor.0].value;
        let data = t.data.iter().map(|x| x + s).collect();
        let value = Tensor::from_vec(&t.shape, data);
        self.push_op(
            value,
            &[scalar, tensor],
            Box::new(|g, _, wants| {
                let gs = wants[0].then(|| Tensor::scalar(g.data.iter().sum()));
                vec![gs, wants[1].then(|| g.clone())]
            }),
        )
    }

    /// `out = a * mul + add`, elementwise with constant coefficients.
    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let t = &self.nodes[a.0].value;
        let data = t.data.iter().map(|x| x * mul + add).collect();
        let value = Tensor::from_vec(&t.shape, data);
        self.push_op(
            value,
            &[a],
            Box::new(move |g, _, wants| {
                vec![wants[0].then(|| {
                    let d = g.data.iter().map(|v| v * mul).collect();
                    Tensor::from_vec(&g.shape, d)
                })]
            }),
        )
    }

    // ---- nonlinearities ----------------------------------------------------

    pub fn relu(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let data = t.data.iter().map(|&x| x.max(0.0)).collect();
        let value = Tensor::from_vec(&t.shape, data);
        self.push_op(
            value,
            &[a],
            Box::new(|g, pv, wants| {
                vec![wants[0].then(|| {
                    let d = g
                        .data
                        .iter()
                        .zip(&pv[0].data)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    Tensor::from_vec(&g.shape, d)
                })]
            }),
        )
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let data = t.data.iter().map(|&x| softplus(x)).collect();
        let value = Tensor::from_vec(&t.shape, data);
        self.push_op(
            value,
            &[a],
            Box::new(|g, pv, wants| {
                vec![wants[0].then(|| {
                    let d = g
                        .data
                        .iter()
                        .zip(&pv[0].data)
                        .map(|(g, &x)| g * sigmoid(x))
                        .collect();
                    Tensor::from_vec(&g.shape, d)
                })]
            }),
        )
    }

    // ---- dense and convolutional layers ------------------------------------

    /// `out[o] = b[o] + Σ_i w[o,i]·x[i]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        let (n_out, n_in) = (tw.shape[0], tw.shape[1]);
        assert_eq!(tx.numel(), n_in, "linear input size");
        assert_eq!(tb.numel(), n_out, "linear bias size");
        let mut data = vec![0.0; n_out];
        for o in 0..n_out {
            let row = &tw.data[o * n_in..(o + 1) * n_in];
            let mut acc = tb.data[o];
            for (wv, xv) in row.iter().zip(&tx.data) {
                acc += wv * xv;
            }
            data[o] = acc;
        }
        let value = Tensor::from_vec(&[n_out], data);
        self.push_op(
            value,
            &[x, w, b],
            Box::new(move |g, pv, wants| {
                let gx = wants[0].then(|| {
                    let mut d = vec![0.0; n_in];
                    for o in 0..n_out {
                        let row = &pv[1].data[o * n_in..(o + 1) * n_in];
                        let go = g.data[o];
                        for (d, wv) in d.iter_mut().zip(row) {
                            *d += go * wv;
                        }
                    }
                    Tensor::from_vec(&[n_in], d)
                });
                let gw = wants[1].then(|| {
                    let mut d = vec![0.0; n_out * n_in];
                    for o in 0..n_out {
                        let go = g.data[o];
                        for (d, xv) in d[o * n_in..(o + 1) * n_in].iter_mut().zip(&pv[0].data) {
                            *d = go * xv;
                        }
                    }
                    Tensor::from_vec(&[n_out, n_in], d)
                });
                let gb = wants[2].then(|| Tensor::from_vec(&[n_out], g.data.clone()));
                vec![gx, gw, gb]
            }),
        )
    }

    /// Same-size 2-D convolution with odd square kernels and stride 1.
    /// `x` is `(C_in, H, W)`, `w` is `(C_out, C_in, K, K)`, `b` is `(C_out)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        let (ci, h, wd) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let (co, k) = (tw.shape[0], tw.shape[2]);
        assert_eq!(tw.shape[1], ci, "conv2d input channels");
        assert_eq!(tw.shape[3], k, "conv2d kernel must be square");
        assert_eq!(tb.numel(), co, "conv2d bias size");
        assert!(k % 2 == 1, "conv2d kernel must be odd");
        let value = conv2d_fwd(tx, tw, tb, ci, h, wd, co, k);
        self.push_op(
            value,
            &[x, w, b],
            Box::new(move |g, pv, wants| {
                let gx = wants[0].then(|| conv2d_bwd_input(g, pv[1], ci, h, wd, co, k));
                let gw = wants[1].then(|| conv2d_bwd_weight(g, pv[0], ci, h, wd, co, k));
                let gb = wants[2].then(|| {
                    let plane = h * wd;
                    let d = (0..co)
                        .map(|oc| g.data[oc * plane..(oc + 1) * plane].iter().sum())
                        .collect();
                    Tensor::from_vec(&[co], d)
                });
                vec![gx, gw, gb]
            }),
        )
    }

    // ---- reductions ---------------------------------------------------------

    /// Mean squared difference `mean((a-b)²)`, a scalar.
    pub fn mean_sq_diff(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "mean_sq_diff shape mismatch");
        let n = ta.numel() as f64;
        let mut acc = 0.0;
        for (x, y) in ta.data.iter().zip(&tb.data) {
            let d = x - y;
            acc += d * d;
        }
        let value = Tensor::scalar(acc / n);
        self.push_op(
            value,
            &[a, b],
            Box::new(move |g, pv, wants| {
                let go = g.item() * 2.0 / n;
                let ga = wants[0].then(|| {
                    let d = pv[0]
                        .data
                        .iter()
                        .zip(&pv[1].data)
                        .map(|(x, y)| go * (x - y))
                        .collect();
                    Tensor::from_vec(&pv[0].shape, d)
                });
                let gb = wants[1].then(|| {
                    let d = pv[0]
                        .data
                        .iter()
                        .zip(&pv[1].data)
                        .map(|(x, y)| -go * (x - y))
                        .collect();
                    Tensor::from_vec(&pv[0].shape, d)
                });
                vec![ga, gb]
            }),
        )
    }

    /// Anisotropic total variation of a `(B,H,W)` cube: the sum of absolute
    /// forward differences along rows and columns (no wraparound), divided
    /// by the number of difference terms and averaged over bands.
    pub fn tv_loss(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let (b, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
        let denom = (b * (h * (w - 1) + (h - 1) * w)) as f64;
        let mut acc = 0.0;
        for bi in 0..b {
            let plane = &t.data[bi * h * w..(bi + 1) * h * w];
            for u in 0..h {
                for v in 0..w - 1 {
                    acc += (plane[u * w + v + 1] - plane[u * w + v]).abs();
                }
            }
            for u in 0..h - 1 {
                for v in 0..w {
                    acc += (plane[(u + 1) * w + v] - plane[u * w + v]).abs();
                }
            }
        }
        let value = Tensor::scalar(acc / denom);
        self.push_op(
            value,
            &[x],
            Box::new(move |g, pv, wants| {
                vec![wants[0].then(|| {
                    let go = g.item() / denom;
                    let mut d = vec![0.0; pv[0].numel()];
                    for bi in 0..b {
                        let base = bi * h * w;
                        let plane = &pv[0].data[base..base + h * w];
                        for u in 0..h {
                            for v in 0..w - 1 {
                                let s = go * (plane[u * w + v + 1] - plane[u * w + v]).signum_or_zero();
                                d[base + u * w + v + 1] += s;
                                d[base + u * w + v] -= s;
                            }
                        }
                        for u in 0..h - 1 {
                            for v in 0..w {
                                let s = go * (plane[(u + 1) * w + v] - plane[u * w + v]).signum_or_zero();
                                d[base + (u + 1) * w + v] += s;
                                d[base + u * w + v] -= s;
                            }
                        }
                    }
                    Tensor::from_vec(&pv[0].shape, d)
                })]
            }),
        )
    }

    // ---- sensing-coupled ops --------------------------------------------

    /// CASSI forward `Φx`: cube `(B,H,W)` to measurement plane `(H, W+d(B−1))`.
    pub fn cassi_forward(&mut self, x: Var, mask: &Rc<CodedMask>, d: usize) -> Var {
        let t = &self.nodes[x.0].value;
        let (b, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
        assert_eq!((h, w), (mask.height, mask.width), "cassi_forward mask shape");
        let w_ext = w + d * (b - 1);
        let mut out = vec![0.0; h * w_ext];
        sensing::forward_into(&t.data, mask, d, b, &mut out);
        let value = Tensor::from_vec(&[h, w_ext], out);
        let m = Rc::clone(mask);
        self.push_op(
            value,
            &[x],
            Box::new(move |g, _, wants| {
                vec![wants[0].then(|| {
                    let mut gx = vec![0.0; b * h * w];
                    sensing::adjoint_into(&g.data, &m, d, b, &mut gx);
                    Tensor::from_vec(&[b, h, w], gx)
                })]
            }),
        )
    }

    /// CASSI adjoint `Φᵀq`: measurement plane to cube `(B,H,W)`.
    pub fn cassi_adjoint(&mut self, q: Var, mask: &Rc<CodedMask>, d: usize, bands: usize) -> Var {
        let t = &self.nodes[q.0].value;
        let (h, w) = (mask.height, mask.width);
        assert_eq!(t.shape, vec![h, w + d * (bands - 1)], "cassi_adjoint shape");
        let mut out = vec![0.0; bands * h * w];
        sensing::adjoint_into(&t.data, mask, d, bands, &mut out);
        let value = Tensor::from_vec(&[bands, h, w], out);
        let m = Rc::clone(mask);
        self.push_op(
            value,
            &[q],
            Box::new(move |g, _, wants| {
                vec![wants[0].then(|| {
                    let w_ext = w + d * (bands - 1);
                    let mut gq = vec![0.0; h * w_ext];
                    sensing::forward_into(&g.data, &m, d, bands, &mut gq);
                    Tensor::from_vec(&[h, w_ext], gq)
                })]
            }),
        )
    }

    /// Per-band means of the mask-modulated measurement windows:
    /// `out[i] = mean_{u,v} M(u,v)·Y(u, v+d·i)`. Feature extractor for the
    /// penalty estimation nets.
    pub fn masked_band_means(&mut self, y: Var, mask: &Rc<CodedMask>, d: usize, bands: usize) -> Var {
        let t = &self.nodes[y.0].value;
        let (h, w) = (mask.height, mask.width);
        let w_ext = w + d * (bands - 1);
        assert_eq!(t.shape, vec![h, w_ext], "masked_band_means shape");
        let norm = 1.0 / (h * w) as f64;
        let mut out = vec![0.0; bands];
        for (j, o) in out.iter_mut().enumerate() {
            let off = d * j;
            let mut acc = 0.0;
            for u in 0..h {
                let mrow = &mask.data[u * w..(u + 1) * w];
                let yrow = &t.data[u * w_ext + off..u * w_ext + off + w];
                for (&m, &yv) in mrow.iter().zip(yrow) {
                    acc += m as f64 * yv;
                }
            }
            *o = acc * norm;
        }
        let value = Tensor::from_vec(&[bands], out);
        let m = Rc::clone(mask);
        self.push_op(
            value,
            &[y],
            Box::new(move |g, _, wants| {
                vec![wants[0].then(|| {
                    let mut gy = vec![0.0; h * w_ext];
                    for j in 0..bands {
                        let gj = g.data[j] * norm;
                        let off = d * j;
                        for u in 0..h {
                            let mrow = &m.data[u * w..(u + 1) * w];
                            let grow = &mut gy[u * w_ext + off..u * w_ext + off + w];
                            for (gv, &mv) in grow.iter_mut().zip(mrow) {
                                *gv += mv as f64 * gj;
                            }
                        }
                    }
                    Tensor::from_vec(&[h, w_ext], gy)
                })]
            }),
        )
    }

    /// Energy-normalized back-projection used as the reconstruction seed:
    /// `x0(i,u,v) = M(u,v)·Y(u, v+d·i) / max(diag(ΦΦᵀ)(u, v+d·i), ε)`.
    /// `inv_diag` is the precomputed `1/max(diag, ε)` plane.
    pub fn normalized_backprojection(
        &mut self,
        y: Var,
        mask: &Rc<CodedMask>,
        inv_diag: &Rc<Vec<f64>>,
        d: usize,
        bands: usize,
    ) -> Var {
        let t = &self.nodes[y.0].value;
        let (h, w) = (mask.height, mask.width);
        let w_ext = w + d * (bands - 1);
        assert_eq!(t.shape, vec![h, w_ext], "normalized_backprojection shape");
        assert_eq!(inv_diag.len(), h * w_ext);
        let compute = {
            let m = Rc::clone(mask);
            let inv = Rc::clone(inv_diag);
            move |src: &[f64]| {
                let mut out = vec![0.0; bands * h * w];
                for j in 0..bands {
                    let off = d * j;
                    for u in 0..h {
                        let mrow = &m.data[u * w..(u + 1) * w];
                        let yrow = &src[u * w_ext + off..u * w_ext + off + w];
                        let irow = &inv[u * w_ext + off..u * w_ext + off + w];
                        let orow = &mut out[(j * h + u) * w..(j * h + u + 1) * w];
                        for (((o, &m), &yv), &iv) in
                            orow.iter_mut().zip(mrow).zip(yrow).zip(irow)
                        {
                            *o = m as f64 * yv * iv;
                        }
                    }
                }
                out
            }
        };
        let value = Tensor::from_vec(&[bands, h, w], compute(&t.data));
        let m = Rc::clone(mask);
        let inv = Rc::clone(inv_diag);
        self.push_op(
            value,
            &[y],
            Box::new(move |g, _, wants| {
                vec![wants[0].then(|| {
                    let mut gy = vec![0.0; h * w_ext];
                    for j in 0..bands {
                        let off = d * j;
                        for u in 0..h {
                            let mrow = &m.data[u * w..(u + 1) * w];
                            let irow = &inv[u * w_ext + off..u * w_ext + off + w];
                            let grow = &g.data[(j * h + u) * w..(j * h + u + 1) * w];
                            let orow = &mut gy[u * w_ext + off..u * w_ext + off + w];
                            for (((o, &m), &iv), &gv) in
                                orow.iter_mut().zip(mrow).zip(irow).zip(grow)
                            {
                                *o += m as f64 * iv * gv;
                            }
                        }
                    }
                    Tensor::from_vec(&[h, w_ext], gy)
                })]
            }),
        )
    }

    /// Lattice permutation `out[i] = x[idx[i]]`. `idx` must be a bijection;
    /// the backward pass scatters gradients through it.
    pub fn gather(&mut self, x: Var, idx: &Rc<Vec<u32>>, out_shape: &[usize]) -> Var {
        let t = &self.nodes[x.0].value;
        assert_eq!(
            idx.len(),
            out_shape.iter().product::<usize>(),
            "gather index length"
        );
        let data: Vec<f64> = idx.iter().map(|&i| t.data[i as usize]).collect();
        let value = Tensor::from_vec(out_shape, data);
        let idx = Rc::clone(idx);
        let in_shape = t.shape.clone();
        self.push_op(
            value,
            &[x],
            Box::new(move |g, _, wants| {
                vec![wants[0].then(|| {
                    let mut gx = vec![0.0; in_shape.iter().product()];
                    for (&i, &gv) in idx.iter().zip(&g.data) {
                        gx[i as usize] += gv;
                    }
                    Tensor::from_vec(&in_shape, gx)
                })]
            }),
        )
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    #[inline]
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn conv2d_fwd(
    tx: &Tensor,
    tw: &Tensor,
    tb: &Tensor,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
) -> Tensor {
    let p = k / 2;
    let plane = h * w;
    let mut out = vec![0.0; co * plane];
    exec::for_each_chunk_mut(&mut out, plane, |oc, ochunk| {
        ochunk.fill(tb.data[oc]);
        for ic in 0..ci {
            let iplane = &tx.data[ic * plane..(ic + 1) * plane];
            let wbase = ((oc * ci) + ic) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = tw.data[wbase + ky * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    shifted_axpy(ochunk, iplane, h, w, ky as isize - p as isize, kx as isize - p as isize, wv);
                }
            }
        }
    });
    Tensor::from_vec(&[co, h, w], out)
}

fn conv2d_bwd_input(
    gout: &Tensor,
    tw: &Tensor,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
) -> Tensor {
    let p = k / 2;
    let plane = h * w;
    let mut gin = vec![0.0; ci * plane];
    exec::for_each_chunk_mut(&mut gin, plane, |ic, ichunk| {
        for oc in 0..co {
            let gplane = &gout.data[oc * plane..(oc + 1) * plane];
            let wbase = ((oc * ci) + ic) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = tw.data[wbase + ky * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    // d in[y,x] picks up gout[y+p-ky, x+p-kx]
                    shifted_axpy(ichunk, gplane, h, w, p as isize - ky as isize, p as isize - kx as isize, wv);
                }
            }
        }
    });
    Tensor::from_vec(&[ci, h, w], gin)
}

fn conv2d_bwd_weight(
    gout: &Tensor,
    tx: &Tensor,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
) -> Tensor {
    let p = k / 2;
    let plane = h * w;
    let mut gw = vec![0.0; co * ci * k * k];
    exec::for_each_chunk_mut(&mut gw, ci * k * k, |oc, wchunk| {
        let gplane = &gout.data[oc * plane..(oc + 1) * plane];
        for ic in 0..ci {
            let iplane = &tx.data[ic * plane..(ic + 1) * plane];
            for ky in 0..k {
                for kx in 0..k {
                    wchunk[ic * k * k + ky * k + kx] = shifted_dot(
                        gplane,
                        iplane,
                        h,
                        w,
                        ky as isize - p as isize,
                        kx as isize - p as isize,
                    );
                }
            }
        }
    });
    Tensor::from_vec(&[co, ci, k, k], gw)
}

/// `dst[y,x] += c * src[y+sy, x+sx]` over the in-range region.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], h: usize, w: usize, sy: isize, sx: isize, c: f64) {
    let y0 = (-sy).max(0) as usize;
    let y1 = ((h as isize).min(h as isize - sy)) as usize;
    let x0 = (-sx).max(0) as usize;
    let x1 = ((w as isize).min(w as isize - sx)) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy_row = ((y as isize + sy) as usize) * w;
        let sx0 = (x0 as isize + sx) as usize;
        let drow = &mut dst[y * w + x0..y * w + x1];
        let srow = &src[sy_row + sx0..sy_row + sx0 + (x1 - x0)];
        for (d, s) in drow.iter_mut().zip(srow) {
            *d += c * s;
        }
    }
}

/// `Σ_{y,x} a[y,x] * b[y+sy, x+sx]` over the in-range region.
#[inline]
fn shifted_dot(a: &[f64], b: &[f64], h: usize, w: usize, sy: isize, sx: isize) -> f64 {
    let y0 = (-sy).max(0) as usize;
    let y1 = ((h as isize).min(h as isize - sy)) as usize;
    let x0 = (-sx).max(0) as usize;
    let x1 = ((w as isize).min(w as isize - sx)) as usize;
    let mut acc = 0.0;
    if x0 >= x1 {
        return 0.0;
    }
    for y in y0..y1 {
        let by = ((y as isize + sy) as usize) * w;
        let bx0 = (x0 as isize + sx) as usize;
        let arow = &a[y * w + x0..y * w + x1];
        let brow = &b[by + bx0..by + bx0 + (x1 - x0)];
        for (av, bv) in arow.iter().zip(brow) {
            acc += av * bv;
        }
    }
    acc
}
