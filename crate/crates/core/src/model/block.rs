//! Mixer block: temporal mixing per channel, then feature mixing per token.

use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::{ParamStore, Tensor};

use super::params::{LinearParams, MlpBlockParams, MlpParams};

pub(crate) struct BlockCtx<'a> {
    pub store: &'a ParamStore,
    pub dropout: f64,
    pub ln_eps: f64,
    pub training: bool,
}

/// linear → GELU → dropout → linear over the last axis.
fn mlp(x: &Tensor, p: &MlpParams, grouped: bool, ctx: &BlockCtx, rng: &mut RngStream) -> Result<Tensor> {
    let s = ctx.store;
    let lin = |x: &Tensor, w, b| {
        if grouped {
            x.grouped_linear(&s.leaf(w), Some(&s.leaf(b)))
        } else {
            x.linear(&s.leaf(w), Some(&s.leaf(b)))
        }
    };
    let h = lin(x, p.fc1_w, p.fc1_b)?.gelu();
    let h = h.dropout(ctx.dropout, ctx.training, rng)?;
    lin(&h, p.fc2_w, p.fc2_b)
}

fn skip(input: &Tensor, output: &Tensor, proj: Option<&LinearParams>, store: &ParamStore) -> Result<Tensor> {
    match proj {
        Some(p) => input
            .concat_last(output)?
            .linear(&store.leaf(p.w), Some(&store.leaf(p.b))),
        None => input.add(output),
    }
}

/// Maps (B, C, N, D) to (B, C, N, D).
pub(crate) fn mlp_block_forward(
    z: &Tensor,
    p: &MlpBlockParams,
    ctx: &BlockCtx,
    rng: &mut RngStream,
) -> Result<Tensor> {
    let s = ctx.store;

    // Temporal stage: each (c, d) token sequence of length N, channel c's own weights.
    let t = z.transpose_last2()?;
    let t = mlp(&t, &p.temporal, !p.temporal_shared, ctx, rng)?.transpose_last2()?;
    let t = t.layer_norm(&s.leaf(p.ln1_gamma), &s.leaf(p.ln1_beta), ctx.ln_eps)?;
    let y1 = skip(z, &t, p.skip1.as_ref(), s)?;

    // Channel stage: the D-vector of every (c, n), weights shared.
    let u = mlp(&y1, &p.channel, false, ctx, rng)?;
    let u = u.layer_norm(&s.leaf(p.ln2_gamma), &s.leaf(p.ln2_beta), ctx.ln_eps)?;
    skip(&y1, &u, p.skip2.as_ref(), s)
}
