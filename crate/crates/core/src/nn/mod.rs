//! Dense function approximators with analytic gradients, Adam, Polyak
//! target tracking, and the zero-padded neighborhood encoding.

mod adam;
mod encode;
mod mlp;

pub use adam::{adam_step, polyak_update, AdamState, BETA1, BETA2, STABILIZER};
pub use encode::{Member, PadSpec};
pub use mlp::{Dense, ForwardCache, Gradient, Head, Mlp};

/// Layer widths for a network with `hidden` layers of `width` units.
pub fn layer_sizes(input: usize, hidden: usize, width: usize, output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden + 2);
    sizes.push(input);
    sizes.extend(std::iter::repeat_n(width, hidden));
    sizes.push(output);
    sizes
}
