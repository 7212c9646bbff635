//! Message passing over a group of frames: local priors from neighbouring
//! frames (into), bilinear AMP inside a frame (within), messages back out of
//! the frame (out) and propagation to neighbouring frames (across).

mod bigamp;
mod local;
mod symbol;

use alloc::vec;
use alloc::vec::Vec;

pub use bigamp::{
    extrinsic_update, extrinsic_update_fd, s_update, within_stage, z_conditional, z_conditional_fd, z_posterior, BiGampState,
    Domain, Extrinsic, WithinConfig, WithinInput, WithinReport, ZConditional,
};
pub use local::{
    across_backward_tap, across_forward_tap, channel_posterior_tap, collapse_mixture, into_tap, out_tap, TapOut, TapPosterior,
    TapPrior,
};
pub use symbol::{apriori_symbol_probs, extrinsic_llr, symbol_extrinsic_llr, symbol_posterior};

use crate::channel::HyperParams;
use crate::C64;

/// Cross-frame messages held by one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMessages {
    pub lambda_fwd: Vec<f64>,
    pub lambda_bwd: Vec<f64>,
    pub eta_fwd: Vec<C64>,
    pub kappa_fwd: Vec<f64>,
    pub eta_bwd: Vec<C64>,
    pub kappa_bwd: Vec<f64>,
    /// Local prior handed to the within stage.
    pub local: Vec<TapPrior>,
    /// Messages leaving the frame after the within stage.
    pub out: Vec<TapOut>,
}

impl FrameMessages {
    /// Forward messages from the prior, backward messages flat.
    pub fn new(l: usize, hyper: &HyperParams) -> Self {
        let mut m = FrameMessages {
            lambda_fwd: vec![hyper.lambda; l],
            lambda_bwd: vec![0.5; l],
            eta_fwd: vec![hyper.zeta; l],
            kappa_fwd: vec![hyper.sigma_sq(); l],
            eta_bwd: vec![C64::new(0.0, 0.0); l],
            kappa_bwd: vec![f64::INFINITY; l],
            local: Vec::new(),
            out: vec![TapOut::uninformative(); l],
        };
        m.local = into_stage(&m);
        m
    }

    pub fn n_taps(&self) -> usize {
        self.lambda_fwd.len()
    }

    /// Reset the forward inputs to the stationary prior (first frame).
    pub fn set_forward_prior(&mut self, hyper: &HyperParams) {
        self.lambda_fwd.iter_mut().for_each(|v| *v = hyper.lambda);
        self.eta_fwd.iter_mut().for_each(|v| *v = hyper.zeta);
        self.kappa_fwd.iter_mut().for_each(|v| *v = hyper.sigma_sq());
    }

    /// Make the backward inputs flat (last frame).
    pub fn clear_backward(&mut self) {
        self.lambda_bwd.iter_mut().for_each(|v| *v = 0.5);
        self.eta_bwd.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        self.kappa_bwd.iter_mut().for_each(|v| *v = f64::INFINITY);
    }
}

/// Local prior of every tap of a frame.
pub fn into_stage(msgs: &FrameMessages) -> Vec<TapPrior> {
    (0..msgs.n_taps())
        .map(|i| into_tap(msgs.lambda_fwd[i], msgs.lambda_bwd[i], msgs.eta_fwd[i], msgs.kappa_fwd[i], msgs.eta_bwd[i], msgs.kappa_bwd[i]))
        .collect()
}

/// Posterior `(1 - pi) delta + pi CN(gamma, nu)` of every tap.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChannel {
    pub pi: Vec<f64>,
    pub gamma: Vec<C64>,
    pub nu: Vec<f64>,
}

/// Returns the posterior together with its mean and variance per tap.
pub fn channel_posterior(prior: &[TapPrior], q_hat: &[C64], q_var: &[f64]) -> (PosteriorChannel, Vec<C64>, Vec<f64>) {
    let taps: Vec<TapPosterior> = prior.iter().zip(q_hat.iter().zip(q_var)).map(|(p, (&q, &v))| channel_posterior_tap(p, q, v)).collect();
    let post = PosteriorChannel {
        pi: taps.iter().map(|t| t.pi).collect(),
        gamma: taps.iter().map(|t| t.gamma).collect(),
        nu: taps.iter().map(|t| t.nu).collect(),
    };
    (post, taps.iter().map(TapPosterior::mean).collect(), taps.iter().map(TapPosterior::var).collect())
}

pub fn out_stage(prior: &[TapPrior], q_hat: &[C64], q_var: &[f64]) -> Vec<TapOut> {
    prior.iter().zip(q_hat.iter().zip(q_var)).map(|(p, (&q, &v))| out_tap(p, q, v)).collect()
}

/// Messages from frame `k` (`from`) into the forward inputs of frame `k + 1`.
pub fn across_forward(from: &FrameMessages, hyper: &HyperParams, to: &mut FrameMessages) {
    for i in 0..from.n_taps() {
        let (l, e, k) = across_forward_tap(from.lambda_fwd[i], from.eta_fwd[i], from.kappa_fwd[i], &from.out[i], hyper);
        to.lambda_fwd[i] = l;
        to.eta_fwd[i] = e;
        to.kappa_fwd[i] = k;
    }
}

/// Messages from frame `k + 1` (`from`) into the backward inputs of frame `k`.
pub fn across_backward(from: &FrameMessages, hyper: &HyperParams, to: &mut FrameMessages) {
    for i in 0..from.n_taps() {
        let (l, e, k) = across_backward_tap(from.lambda_bwd[i], from.eta_bwd[i], from.kappa_bwd[i], &from.out[i], hyper);
        to.lambda_bwd[i] = l;
        to.eta_bwd[i] = e;
        to.kappa_bwd[i] = k;
    }
}
