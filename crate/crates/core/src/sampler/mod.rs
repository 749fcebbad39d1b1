//! The sampler family `tau(x) = H(T(G(f(x))))` and everything needed to turn
//! one search-space point into sampling probabilities.

pub mod alias;
pub mod params;
pub mod transform;

pub use alias::AliasTable;
pub use params::{encoded_dim, SamplerParams, TransformMode};
pub use transform::TransformTable;

use crate::error::{Error, Result};
use crate::features::FeatureTable;

fn check_features(params: &SamplerParams, table: &FeatureTable) -> Result<()> {
    if params.num_features != table.num_features() {
        return Err(Error::DimensionMismatch {
            expected: table.num_features(),
            found: params.num_features,
        });
    }
    Ok(())
}

/// `G` evaluated on every instance of `table`.
pub fn g_values(params: &SamplerParams, table: &FeatureTable) -> Result<Vec<f64>> {
    check_features(params, table)?;
    Ok((0..table.len())
        .map(|i| params.eval_g_unchecked(&table.features(i)))
        .collect())
}

/// Build `T` for `params` over `table`. Rebuilt per candidate because `G`
/// depends on the coefficients.
pub fn build_transform(params: &SamplerParams, table: &FeatureTable) -> Result<TransformTable> {
    let g = g_values(params, table)?;
    TransformTable::build(params.transform_mode, &g, table.grad_norms())
}

/// Unnormalized sampler values `tau[i] in [0, 1]`.
pub fn eval_tau(
    params: &SamplerParams,
    transform: &TransformTable,
    table: &FeatureTable,
) -> Result<Vec<f64>> {
    check_features(params, table)?;
    Ok((0..table.len())
        .map(|i| {
            let g = params.eval_g_unchecked(&table.features(i));
            params.eval_h_unchecked(transform.eval(g))
        })
        .collect())
}

/// Scale `tau` to a probability vector.
pub fn normalize(tau: &[f64]) -> Result<Vec<f64>> {
    if tau.is_empty() {
        return Err(Error::Empty("sampler values"));
    }
    if let Some(t) = tau.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid(format!(
            "sampler value {t} is not a finite non-negative number"
        )));
    }
    let sum: f64 = tau.iter().sum();
    if sum < 1e-12 {
        return Err(Error::DegenerateSampler(sum));
    }
    Ok(tau.iter().map(|t| t / sum).collect())
}

/// Transform, evaluate and normalize in one go.
pub fn sampling_probs(params: &SamplerParams, table: &FeatureTable) -> Result<Vec<f64>> {
    let transform = build_transform(params, table)?;
    normalize(&eval_tau(params, &transform, table)?)
}

/// Lipschitz constant `C` of `f -> tau` in the Euclidean norm of the
/// normalized features: `slope(H) * slope(T) * |c|_2`. Infinite when `H`
/// jumps.
pub fn lipschitz_bound(params: &SamplerParams, transform: &TransformTable) -> f64 {
    let l_h = params.h_lipschitz();
    if l_h.is_infinite() {
        return f64::INFINITY;
    }
    let c_norm = params
        .coefficients
        .iter()
        .map(|c| c * c)
        .sum::<f64>()
        .sqrt();
    l_h * transform.max_slope() * c_norm
}
