//! Half-quadratic-splitting unfolding reconstructor.
//!
//! Each stage applies the closed-form data update
//! `r = x + Φᵀ[(y − Φx)/(µ + diag(ΦΦᵀ))]`, followed by a learnable residual
//! CNN denoiser for the prior subproblem. The penalty `µ` is predicted per
//! stage by a small fully-connected net over per-band measurement means,
//! with a softplus output keeping it strictly positive.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cube::{CodedMask, HyperspectralCube, Measurement};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::sensing;
use crate::tensor::Tensor;

/// Floor added to the softplus output of every µ estimator.
pub const MU_FLOOR: f64 = 1e-6;

/// Division guard in the normalized back-projection seed.
pub const BACKPROJECTION_EPS: f64 = 1e-6;

/// Denoiser family: `depth` 3×3 conv layers with ReLU between them,
/// `base_channels` hidden width, optional residual connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub base_channels: usize,
    pub depth: usize,
    pub residual: bool,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 1 {
            return Err(Error::Param("base_channels must be >= 1".into()));
        }
        if self.depth < 1 {
            return Err(Error::Param("denoiser depth must be >= 1".into()));
        }
        Ok(())
    }

    /// (in, out) channel pairs of each conv layer for `bands` input bands.
    pub(crate) fn layer_channels(&self, bands: usize) -> Vec<(usize, usize)> {
        let c = self.base_channels;
        match self.depth {
            1 => vec![(bands, bands)],
            n => {
                let mut layers = vec![(bands, c)];
                layers.extend(std::iter::repeat((c, c)).take(n - 2));
                layers.push((c, bands));
                layers
            }
        }
    }
}

/// Sensing geometry a model was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingMeta {
    pub d: usize,
    pub bands: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor, // (C_out, C_in, K, K)
    pub bias: Tensor,   // (C_out)
}

impl ConvLayer {
    fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        ConvLayer {
            weight: Tensor::zeros(&[c_out, c_in, k, k]),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    fn random(c_out: usize, c_in: usize, k: usize, scale: f64, rng: &mut ChaCha12Rng) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let std = scale * (2.0 / fan_in).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        let mut weight = Tensor::from_vec(
            &[c_out, c_in, k, k],
            (0..c_out * c_in * k * k)
                .map(|_| normal.sample(rng))
                .collect(),
        );
        weight.snap_f32();
        ConvLayer {
            weight,
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let s = &self.weight.shape;
        (s[0] * s[1] * s[2] * s[3] * h * w) as u64
    }
}

/// Two-layer fully connected µ estimator over per-band measurement means.
#[derive(Debug, Clone, PartialEq)]
pub struct MuNet {
    pub w1: Tensor, // (hidden, bands)
    pub b1: Tensor, // (hidden)
    pub w2: Tensor, // (1, hidden)
    pub b2: Tensor, // (1)
}

impl MuNet {
    fn random(bands: usize, rng: &mut ChaCha12Rng) -> Self {
        let hidden = bands;
        let std = 1.0 / (bands as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        let mut w1 = Tensor::from_vec(
            &[hidden, bands],
            (0..hidden * bands).map(|_| normal.sample(rng)).collect(),
        );
        let mut w2 = Tensor::from_vec(
            &[1, hidden],
            (0..hidden).map(|_| normal.sample(rng)).collect(),
        );
        w1.snap_f32();
        w2.snap_f32();
        MuNet {
            w1,
            b1: Tensor::zeros(&[hidden]),
            w2,
            b2: Tensor::zeros(&[1]),
        }
    }

    pub(crate) fn zeros(bands: usize) -> Self {
        MuNet {
            w1: Tensor::zeros(&[bands, bands]),
            b1: Tensor::zeros(&[bands]),
            w2: Tensor::zeros(&[1, bands]),
            b2: Tensor::zeros(&[1]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.numel() + self.b1.numel() + self.w2.numel() + self.b2.numel()
    }

    pub fn macs(&self) -> u64 {
        (self.w1.shape[0] * self.w1.shape[1] + self.w2.shape[1]) as u64
    }
}

/// One unfolding stage: denoiser weights plus its µ estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub denoiser: Vec<ConvLayer>,
    pub mu_net: MuNet,
}

impl StageParams {
    pub fn param_count(&self) -> usize {
        self.denoiser.iter().map(ConvLayer::param_count).sum::<usize>()
            + self.mu_net.param_count()
    }
}

/// A K-stage unfolding reconstructor.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldingModel {
    pub stages: Vec<StageParams>,
    pub sensing: SensingMeta,
    pub denoiser_cfg: DenoiserConfig,
}

impl UnfoldingModel {
    /// Random initialization. The last conv of each denoiser starts near
    /// zero so the model begins close to a pure data-update iteration.
    pub fn new(
        k_stages: usize,
        sensing: SensingMeta,
        cfg: DenoiserConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if k_stages < 1 {
            return Err(Error::Param("stage count must be >= 1".into()));
        }
        if sensing.bands < 1 {
            return Err(Error::Param("bands must be >= 1".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let layers = cfg.layer_channels(sensing.bands);
        let stages = (0..k_stages)
            .map(|_| {
                let denoiser = layers
                    .iter()
                    .enumerate()
                    .map(|(l, &(ci, co))| {
                        let scale = if l + 1 == layers.len() { 0.01 } else { 1.0 };
                        ConvLayer::random(co, ci, 3, scale, &mut rng)
                    })
                    .collect();
                StageParams {
                    denoiser,
                    mu_net: MuNet::random(sensing.bands, &mut rng),
                }
            })
            .collect();
        Ok(UnfoldingModel {
            stages,
            sensing,
            denoiser_cfg: cfg,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Zero every denoiser weight (test/diagnostic helper); with residual
    /// denoisers this turns each stage into a bare data update.
    pub fn zero_denoiser_weights(&mut self) {
        for stage in &mut self.stages {
            for conv in &mut stage.denoiser {
                conv.weight.data.fill(0.0);
                conv.bias.data.fill(0.0);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.stages.iter().map(StageParams::param_count).sum()
    }

    /// Visit parameters in canonical (checkpoint) order.
    pub fn for_each_param(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (k, stage) in self.stages.iter().enumerate() {
            for (l, conv) in stage.denoiser.iter().enumerate() {
                f(&format!("stage{k}.denoiser.conv{l}.weight"), &conv.weight);
                f(&format!("stage{k}.denoiser.conv{l}.bias"), &conv.bias);
            }
            f(&format!("stage{k}.mu.fc1.weight"), &stage.mu_net.w1);
            f(&format!("stage{k}.mu.fc1.bias"), &stage.mu_net.b1);
            f(&format!("stage{k}.mu.fc2.weight"), &stage.mu_net.w2);
            f(&format!("stage{k}.mu.fc2.bias"), &stage.mu_net.b2);
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (k, stage) in self.stages.iter_mut().enumerate() {
            for (l, conv) in stage.denoiser.iter_mut().enumerate() {
                f(&format!("stage{k}.denoiser.conv{l}.weight"), &mut conv.weight);
                f(&format!("stage{k}.denoiser.conv{l}.bias"), &mut conv.bias);
            }
            f(&format!("stage{k}.mu.fc1.weight"), &mut stage.mu_net.w1);
            f(&format!("stage{k}.mu.fc1.bias"), &mut stage.mu_net.b1);
            f(&format!("stage{k}.mu.fc2.weight"), &mut stage.mu_net.w2);
            f(&format!("stage{k}.mu.fc2.bias"), &mut stage.mu_net.b2);
        }
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for stage in &mut self.stages {
            for conv in &mut stage.denoiser {
                out.push(&mut conv.weight);
                out.push(&mut conv.bias);
            }
            out.push(&mut stage.mu_net.w1);
            out.push(&mut stage.mu_net.b1);
            out.push(&mut stage.mu_net.w2);
            out.push(&mut stage.mu_net.b2);
        }
        out
    }

    /// SHA-256 over all parameters (little-endian f64 bytes) in canonical
    /// order; used for bit-level frozen-backbone checks.
    pub fn params_digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        self.for_each_param(&mut |_, t| {
            for v in &t.data {
                hasher.update(v.to_le_bytes());
            }
        });
        hasher.finalize().into()
    }

    /// Estimate the stage-`stage_index` penalty parameter from a measurement.
    pub fn estimate_mu(
        &self,
        y: &Measurement,
        mask: &CodedMask,
        stage_index: usize,
    ) -> Result<f64> {
        if stage_index >= self.stages.len() {
            return Err(Error::Param(format!(
                "stage index {stage_index} out of range 0..{}",
                self.stages.len()
            )));
        }
        y.check_geometry(mask)?;
        let ctx = SensingCtx::new(mask.clone(), y.d, y.bands);
        let mut g = Graph::new(false);
        let vy = g.constant(Tensor::from_vec(&[y.height, y.width_ext], y.data.clone()));
        let feat = g.masked_band_means(vy, &ctx.mask, ctx.d, ctx.bands);
        let stage = bind_stage(&mut g, &self.stages[stage_index], false);
        let mu = mu_g(&mut g, &stage, feat);
        Ok(g.value(mu).item())
    }

    /// Run the full K-stage reconstruction.
    pub fn reconstruct(&self, y: &Measurement, mask: &CodedMask) -> Result<HyperspectralCube> {
        if y.bands != self.sensing.bands || y.d != self.sensing.d {
            return Err(Error::Dim(format!(
                "measurement meta (d={}, B={}) does not match model (d={}, B={})",
                y.d, y.bands, self.sensing.d, self.sensing.bands
            )));
        }
        y.check_geometry(mask)?;
        let ctx = SensingCtx::new(mask.clone(), self.sensing.d, self.sensing.bands);
        let mut g = Graph::new(false);
        let vy = g.constant(Tensor::from_vec(&[y.height, y.width_ext], y.data.clone()));
        let (bound, _) = bind_unfolding(&mut g, self, false);
        let out = reconstruct_g(&mut g, &bound, &self.denoiser_cfg, &ctx, vy);
        Ok(cube_from_tensor(g.value(out), mask.height, mask.width))
    }
}

/// Precomputed sensing context shared by all graph ops of one scene set.
#[derive(Clone)]
pub struct SensingCtx {
    pub mask: Rc<CodedMask>,
    pub d: usize,
    pub bands: usize,
    /// diag(ΦΦᵀ) on the measurement plane.
    pub diag: Tensor,
    /// `1/max(diag, ε)`, for the back-projection seed.
    pub inv_diag: Rc<Vec<f64>>,
}

impl SensingCtx {
    pub fn new(mask: CodedMask, d: usize, bands: usize) -> Self {
        let diag_m = sensing::phi_phit_diag(&mask, d, bands);
        let inv_diag = Rc::new(
            diag_m
                .data
                .iter()
                .map(|&v| 1.0 / v.max(BACKPROJECTION_EPS))
                .collect::<Vec<f64>>(),
        );
        let diag = Tensor::from_vec(&[diag_m.height, diag_m.width_ext], diag_m.data);
        SensingCtx {
            mask: Rc::new(mask),
            d,
            bands,
            diag,
            inv_diag,
        }
    }

    pub fn height(&self) -> usize {
        self.mask.height
    }

    pub fn width(&self) -> usize {
        self.mask.width
    }
}

// ---- graph builders (shared by inference and training) --------------------

pub(crate) struct BoundConv {
    pub w: Var,
    pub b: Var,
}

pub(crate) struct BoundMuNet {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub(crate) struct BoundStage {
    pub convs: Vec<BoundConv>,
    pub mu: BoundMuNet,
}

pub(crate) struct BoundUnfolding {
    pub stages: Vec<BoundStage>,
}

fn bind_tensor(g: &mut Graph, t: &Tensor, track: bool) -> Var {
    if track {
        g.leaf(t.clone())
    } else {
        g.constant(t.clone())
    }
}

pub(crate) fn bind_stage(g: &mut Graph, stage: &StageParams, track: bool) -> BoundStage {
    let convs = stage
        .denoiser
        .iter()
        .map(|c| BoundConv {
            w: bind_tensor(g, &c.weight, track),
            b: bind_tensor(g, &c.bias, track),
        })
        .collect();
    let mu = BoundMuNet {
        w1: bind_tensor(g, &stage.mu_net.w1, track),
        b1: bind_tensor(g, &stage.mu_net.b1, track),
        w2: bind_tensor(g, &stage.mu_net.w2, track),
        b2: bind_tensor(g, &stage.mu_net.b2, track),
    };
    BoundStage { convs, mu }
}

/// Bind a model's parameters into `g`. Returns the bound structure and the
/// flat Var list in canonical parameter order (for gradient readout).
pub(crate) fn bind_unfolding(
    g: &mut Graph,
    model: &UnfoldingModel,
    track: bool,
) -> (BoundUnfolding, Vec<Var>) {
    let mut flat = Vec::new();
    let stages = model
        .stages
        .iter()
        .map(|s| {
            let bound = bind_stage(g, s, track);
            for c in &bound.convs {
                flat.push(c.w);
                flat.push(c.b);
            }
            flat.push(bound.mu.w1);
            flat.push(bound.mu.b1);
            flat.push(bound.mu.w2);
            flat.push(bound.mu.b2);
            bound
        })
        .collect();
    (BoundUnfolding { stages }, flat)
}

/// µ estimator head: `softplus(fc2(relu(fc1(feat)))) + MU_FLOOR`.
pub(crate) fn mu_g(g: &mut Graph, stage: &BoundStage, feat: Var) -> Var {
    let h = g.linear(feat, stage.mu.w1, stage.mu.b1);
    let h = g.relu(h);
    let o = g.linear(h, stage.mu.w2, stage.mu.b2);
    let sp = g.softplus(o);
    g.affine(sp, 1.0, MU_FLOOR)
}

/// Closed-form data update `r = x + Φᵀ[(y − Φx)/(µ + diag(ΦΦᵀ))]`.
pub(crate) fn data_update_g(g: &mut Graph, ctx: &SensingCtx, x: Var, y: Var, mu: Var) -> Var {
    let fx = g.cassi_forward(x, &ctx.mask, ctx.d);
    let resid = g.sub(y, fx);
    let diag = g.constant(ctx.diag.clone());
    let denom = g.bcast_add_scalar(mu, diag);
    let q = g.div(resid, denom);
    let bp = g.cassi_adjoint(q, &ctx.mask, ctx.d, ctx.bands);
    g.add(x, bp)
}

/// Denoiser: `depth` 3×3 convs with ReLU between, residual if configured.
pub(crate) fn denoise_g(g: &mut Graph, stage: &BoundStage, cfg: &DenoiserConfig, r: Var) -> Var {
    let mut h = r;
    let n = stage.convs.len();
    for (l, conv) in stage.convs.iter().enumerate() {
        h = g.conv2d(h, conv.w, conv.b);
        if l + 1 < n {
            h = g.relu(h);
        }
    }
    if cfg.residual {
        g.add(r, h)
    } else {
        h
    }
}

/// Back-projection seed `x0` from a measurement Var.
pub(crate) fn initial_estimate_g(g: &mut Graph, ctx: &SensingCtx, y: Var) -> Var {
    g.normalized_backprojection(y, &ctx.mask, &ctx.inv_diag, ctx.d, ctx.bands)
}

/// Full K-stage reconstruction graph.
pub(crate) fn reconstruct_g(
    g: &mut Graph,
    bound: &BoundUnfolding,
    cfg: &DenoiserConfig,
    ctx: &SensingCtx,
    y: Var,
) -> Var {
    let feat = g.masked_band_means(y, &ctx.mask, ctx.d, ctx.bands);
    let mut x = initial_estimate_g(g, ctx, y);
    for stage in &bound.stages {
        let mu = mu_g(g, stage, feat);
        let r = data_update_g(g, ctx, x, y, mu);
        x = denoise_g(g, stage, cfg, r);
    }
    x
}

pub(crate) fn cube_from_tensor(t: &Tensor, height: usize, width: usize) -> HyperspectralCube {
    debug_assert_eq!(t.shape.len(), 3);
    debug_assert_eq!(t.shape[1], height);
    debug_assert_eq!(t.shape[2], width);
    HyperspectralCube::from_vec(height, width, t.shape[0], t.data.clone())
}

pub(crate) fn tensor_from_cube(c: &HyperspectralCube) -> Tensor {
    Tensor::from_vec(&[c.bands, c.height, c.width], c.data.clone())
}

pub(crate) fn tensor_from_meas(m: &Measurement) -> Tensor {
    Tensor::from_vec(&[m.height, m.width_ext], m.data.clone())
}

// ---- standalone operation forms -------------------------------------------

/// One closed-form data update with an explicit scalar penalty.
pub fn data_update(
    x: &HyperspectralCube,
    y: &Measurement,
    mask: &CodedMask,
    mu: f64,
) -> Result<HyperspectralCube> {
    if mu <= 0.0 {
        return Err(Error::Param(format!("mu must be > 0, got {mu}")));
    }
    if x.height != mask.height || x.width != mask.width {
        return Err(Error::Dim("cube/mask shape mismatch".into()));
    }
    if x.bands != y.bands {
        return Err(Error::Dim("cube/measurement band mismatch".into()));
    }
    y.check_geometry(mask)?;
    let ctx = SensingCtx::new(mask.clone(), y.d, y.bands);
    let mut g = Graph::new(false);
    let vx = g.constant(tensor_from_cube(x));
    let vy = g.constant(tensor_from_meas(y));
    let vmu = g.constant(Tensor::scalar(mu));
    let r = data_update_g(&mut g, &ctx, vx, vy, vmu);
    Ok(cube_from_tensor(g.value(r), x.height, x.width))
}

/// Apply one stage's denoiser to a cube.
pub fn denoise(
    r: &HyperspectralCube,
    stage: &StageParams,
    cfg: &DenoiserConfig,
) -> Result<HyperspectralCube> {
    if !r.is_finite() {
        return Err(Error::Domain("denoise input contains non-finite values".into()));
    }
    let mut g = Graph::new(false);
    let vr = g.constant(tensor_from_cube(r));
    let bound = bind_stage(&mut g, stage, false);
    let out = denoise_g(&mut g, &bound, cfg, vr);
    Ok(cube_from_tensor(g.value(out), r.height, r.width))
}

/// Energy-normalized adjoint back-projection used as `x0`.
pub fn initial_estimate(y: &Measurement, mask: &CodedMask) -> Result<HyperspectralCube> {
    y.check_geometry(mask)?;
    let ctx = SensingCtx::new(mask.clone(), y.d, y.bands);
    let mut g = Graph::new(false);
    let vy = g.constant(tensor_from_meas(y));
    let x0 = initial_estimate_g(&mut g, &ctx, vy);
    Ok(cube_from_tensor(g.value(x0), mask.height, mask.width))
}

/// Learnable-parameter count and a conv/dense MAC estimate for one
/// reconstruction at the given spatial size. Data updates and activations
/// are excluded from the MAC count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub param_count: usize,
    pub mac_estimate: u64,
}

pub fn model_stats(model: &UnfoldingModel, height: usize, width: usize) -> ModelStats {
    let mut macs = 0u64;
    for stage in &model.stages {
        for conv in &stage.denoiser {
            macs += conv.macs(height, width);
        }
        macs += stage.mu_net.macs();
    }
    ModelStats {
        param_count: model.param_count(),
        mac_estimate: macs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{forward, make_mask};

    fn desk_model(k: usize, seed: u64) -> UnfoldingModel {
        UnfoldingModel::new(
            k,
            SensingMeta { d: 1, bands: 3 },
            DenoiserConfig {
                base_channels: 6,
                depth: 3,
                residual: true,
            },
            seed,
        )
        .unwrap()
    }

    fn random_cube(h: usize, w: usize, b: usize, seed: u64) -> HyperspectralCube {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        HyperspectralCube::from_vec(
            h,
            w,
            b,
            (0..h * w * b).map(|_| rng.gen::<f64>()).collect(),
        )
    }

    #[test]
    fn data_update_fixed_point() {
        // noiseless consistent pair: r = x* exactly for any mu > 0
        let mask = make_mask(6, 6, 0.5, 3).unwrap();
        let x = random_cube(6, 6, 3, 4);
        let y = forward(&x, &mask, 1).unwrap();
        for mu in [1e-3, 1.0, 1e4] {
            let r = data_update(&x, &y, &mask, mu).unwrap();
            for (a, b) in r.data.iter().zip(&x.data) {
                assert_eq!(a, b, "residual must be exactly zero");
            }
        }
    }

    #[test]
    fn data_update_large_mu_freezes_state() {
        let mask = make_mask(6, 6, 0.5, 5).unwrap();
        let x_true = random_cube(6, 6, 3, 6);
        let y = forward(&x_true, &mask, 1).unwrap();
        let x_k = random_cube(6, 6, 3, 7);
        let r = data_update(&x_k, &y, &mask, 1e9).unwrap();
        let max_dev = r
            .data
            .iter()
            .zip(&x_k.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_dev < 1e-8, "max deviation {max_dev}");
    }

    #[test]
    fn data_update_rejects_nonpositive_mu() {
        let mask = make_mask(4, 4, 0.5, 1).unwrap();
        let x = random_cube(4, 4, 2, 2);
        let y = forward(&x, &mask, 1).unwrap();
        assert!(matches!(
            data_update(&x, &y, &mask, 0.0),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            data_update(&x, &y, &mask, -1.0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn denoise_identity_at_zero_weights() {
        let mut model = desk_model(1, 8);
        model.zero_denoiser_weights();
        let r = random_cube(5, 5, 3, 9);
        let out = denoise(&r, &model.stages[0], &model.denoiser_cfg).unwrap();
        assert_eq!(out.data, r.data);
    }

    #[test]
    fn denoise_preserves_shape() {
        let model = desk_model(1, 10);
        for (h, w) in [(4, 7), (8, 8), (5, 12)] {
            let r = random_cube(h, w, 3, 11);
            let out = denoise(&r, &model.stages[0], &model.denoiser_cfg).unwrap();
            assert_eq!((out.height, out.width, out.bands), (h, w, 3));
        }
    }

    #[test]
    fn denoise_rejects_nonfinite() {
        let model = desk_model(1, 12);
        let mut r = random_cube(4, 4, 3, 13);
        r.data[5] = f64::NAN;
        assert!(matches!(
            denoise(&r, &model.stages[0], &model.denoiser_cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn estimate_mu_positive_and_deterministic() {
        let model = desk_model(2, 14);
        let mask = make_mask(6, 6, 0.5, 15).unwrap();
        for i in 0..100 {
            let x = random_cube(6, 6, 3, 100 + i);
            let y = forward(&x, &mask, 1).unwrap();
            let mu = model.estimate_mu(&y, &mask, 0).unwrap();
            assert!(mu > 0.0);
            assert_eq!(mu, model.estimate_mu(&y, &mask, 0).unwrap());
        }
    }

    #[test]
    fn estimate_mu_stage_bounds() {
        let model = desk_model(2, 16);
        let mask = make_mask(4, 4, 0.5, 17).unwrap();
        let y = forward(&random_cube(4, 4, 3, 18), &mask, 1).unwrap();
        assert!(model.estimate_mu(&y, &mask, 2).is_err());
    }

    #[test]
    fn initial_estimate_zero_measurement() {
        let mask = make_mask(4, 4, 0.5, 19).unwrap();
        let y = Measurement::zeros(4, 4, 1, 3);
        let x0 = initial_estimate(&y, &mask).unwrap();
        assert!(x0.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_estimate_single_band_ones_mask() {
        // B=1, all-ones mask: diag == 1 so x0 == Y
        let mask = CodedMask::from_vec(3, 4, vec![1; 12]).unwrap();
        let x = random_cube(3, 4, 1, 20);
        let y = forward(&x, &mask, 0).unwrap();
        let x0 = initial_estimate(&y, &mask).unwrap();
        assert_eq!(x0.data, y.data);
    }

    #[test]
    fn initial_estimate_hand_computed() {
        // 4x4x2, d=1: x0(i,u,v) = M(u,v) Y(u,v+i) / max(diag(u,v+i), eps)
        let mask = make_mask(4, 4, 0.6, 21).unwrap();
        let xc = random_cube(4, 4, 2, 22);
        let y = forward(&xc, &mask, 1).unwrap();
        let diag = sensing::phi_phit_diag(&mask, 1, 2);
        let x0 = initial_estimate(&y, &mask).unwrap();
        for i in 0..2 {
            for u in 0..4 {
                for v in 0..4 {
                    let want = mask.at(u, v) * y.get(u, v + i)
                        / diag.get(u, v + i).max(BACKPROJECTION_EPS);
                    let got = x0.get(i, u, v);
                    assert!((want - got).abs() < 1e-6, "({i},{u},{v}): {want} vs {got}");
                }
            }
        }
    }

    #[test]
    fn reconstruct_output_shape_and_determinism() {
        let model = desk_model(3, 23);
        let mask = make_mask(8, 6, 0.5, 24).unwrap();
        let x = random_cube(8, 6, 3, 25);
        let y = forward(&x, &mask, 1).unwrap();
        let a = model.reconstruct(&y, &mask).unwrap();
        let b = model.reconstruct(&y, &mask).unwrap();
        assert_eq!((a.height, a.width, a.bands), (8, 6, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn reconstruct_matches_manual_stage_loop() {
        let model = desk_model(3, 26);
        let mask = make_mask(6, 6, 0.5, 27).unwrap();
        let x_true = random_cube(6, 6, 3, 28);
        let y = forward(&x_true, &mask, 1).unwrap();

        let auto = model.reconstruct(&y, &mask).unwrap();

        let mut x = initial_estimate(&y, &mask).unwrap();
        for k in 0..model.num_stages() {
            let mu = model.estimate_mu(&y, &mask, k).unwrap();
            let r = data_update(&x, &y, &mask, mu).unwrap();
            x = denoise(&r, &model.stages[k], &model.denoiser_cfg).unwrap();
        }
        assert_eq!(auto.data, x.data, "manual loop must be bit-identical");
    }

    #[test]
    fn reconstruct_zero_denoiser_is_pure_data_updates() {
        let mut model = desk_model(4, 29);
        model.zero_denoiser_weights();
        let mask = make_mask(6, 6, 0.5, 30).unwrap();
        let x_true = random_cube(6, 6, 3, 31);
        let y = forward(&x_true, &mask, 1).unwrap();

        let auto = model.reconstruct(&y, &mask).unwrap();

        let mut x = initial_estimate(&y, &mask).unwrap();
        for k in 0..model.num_stages() {
            let mu = model.estimate_mu(&y, &mask, k).unwrap();
            x = data_update(&x, &y, &mask, mu).unwrap();
        }
        assert_eq!(auto.data, x.data);
    }

    #[test]
    fn param_count_linear_in_stages() {
        let one = desk_model(1, 32).param_count();
        let nine = desk_model(9, 32).param_count();
        assert_eq!(nine, 9 * one);
    }

    #[test]
    fn conv_param_arithmetic() {
        // one 3x3 conv, C_in=4, C_out=8 with bias: 9*4*8 + 8 = 296
        let conv = ConvLayer::zeros(8, 4, 3);
        assert_eq!(conv.param_count(), 296);
    }

    #[test]
    fn mac_estimate_matches_hand_sum() {
        // 2-conv denoiser (B=3, C=6) on 64x64:
        //   conv0: 9*3*6*64*64, conv1: 9*6*3*64*64, mu: 3*3 + 3
        let model = UnfoldingModel::new(
            1,
            SensingMeta { d: 1, bands: 3 },
            DenoiserConfig {
                base_channels: 6,
                depth: 2,
                residual: true,
            },
            33,
        )
        .unwrap();
        let stats = model_stats(&model, 64, 64);
        let hand = 9 * 3 * 6 * 64 * 64 + 9 * 6 * 3 * 64 * 64 + (3 * 3 + 3);
        assert_eq!(stats.mac_estimate, hand as u64);
    }

    #[test]
    fn params_digest_detects_single_bit_change() {
        let mut model = desk_model(2, 34);
        let before = model.params_digest();
        model.stages[0].denoiser[0].weight.data[0] += 1e-7;
        assert_ne!(before, model.params_digest());
    }
}
