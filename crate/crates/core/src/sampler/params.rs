use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which monotone map sends the aggregated feature `G` into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformMode {
    /// Cumulative gradient-norm share.
    Cgf,
    /// Plain empirical distribution (every instance weighs 1).
    Cdf,
}

impl std::fmt::Display for TransformMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransformMode::Cgf => "cgf",
            TransformMode::Cdf => "cdf",
        })
    }
}

impl std::str::FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cgf" => Ok(TransformMode::Cgf),
            "cdf" => Ok(TransformMode::Cdf),
            other => Err(Error::invalid(format!("unknown transform `{other}`"))),
        }
    }
}

/// One point of the sampler search space: a piecewise-linear profile `H` with
/// `S` segments (endpoints `e`, values `v`) and aggregation weights `c` over
/// `N` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerParams {
    #[serde(rename = "S")]
    pub segments: usize,
    #[serde(rename = "N")]
    pub num_features: usize,
    #[serde(rename = "e")]
    pub endpoints: Vec<f64>,
    #[serde(rename = "v")]
    pub values: Vec<f64>,
    #[serde(rename = "c")]
    pub coefficients: Vec<f64>,
    pub transform_mode: TransformMode,
}

/// Length of the unit-cube encoding: `(S - 1) + (S + 1) + N`.
pub fn encoded_dim(segments: usize, num_features: usize) -> usize {
    2 * segments + num_features
}

impl SamplerParams {
    pub fn new(
        endpoints: Vec<f64>,
        values: Vec<f64>,
        coefficients: Vec<f64>,
        transform_mode: TransformMode,
    ) -> Result<Self> {
        let p = SamplerParams {
            segments: endpoints.len().saturating_sub(1),
            num_features: coefficients.len(),
            endpoints,
            values,
            coefficients,
            transform_mode,
        };
        p.validate()?;
        Ok(p)
    }

    /// `v_s = 1` everywhere with `c = 0`: every instance gets the same weight.
    pub fn uniform(segments: usize, num_features: usize, transform_mode: TransformMode) -> Self {
        let endpoints = (0..=segments).map(|s| s as f64 / segments as f64).collect();
        SamplerParams {
            segments,
            num_features,
            endpoints,
            values: vec![1.0; segments + 1],
            coefficients: vec![0.0; num_features],
            transform_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.segments;
        if s < 1 {
            return Err(Error::invalid("need at least one segment"));
        }
        if self.num_features < 1 {
            return Err(Error::invalid("need at least one feature"));
        }
        if self.endpoints.len() != s + 1 || self.values.len() != s + 1 {
            return Err(Error::DimensionMismatch {
                expected: s + 1,
                found: self.endpoints.len().min(self.values.len()),
            });
        }
        if self.coefficients.len() != self.num_features {
            return Err(Error::DimensionMismatch {
                expected: self.num_features,
                found: self.coefficients.len(),
            });
        }
        if self.endpoints[0] != 0.0 || self.endpoints[s] != 1.0 {
            return Err(Error::invalid("endpoints must start at 0 and end at 1"));
        }
        if self.endpoints.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::invalid("endpoints must be non-decreasing"));
        }
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("values must lie in [0, 1]"));
        }
        if self.coefficients.iter().any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(Error::invalid("coefficients must lie in [-1, 1]"));
        }
        Ok(())
    }

    pub fn encoded_dim(&self) -> usize {
        encoded_dim(self.segments, self.num_features)
    }

    /// Unit-cube encoding `[interior endpoints, values, (c + 1) / 2]`.
    pub fn encode(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.encoded_dim());
        z.extend_from_slice(&self.endpoints[1..self.segments]);
        z.extend_from_slice(&self.values);
        z.extend(self.coefficients.iter().map(|c| (c + 1.0) / 2.0));
        z
    }

    /// Inverse of [`encode`](Self::encode). Interior endpoints are the sorted
    /// raw coordinates, so any point of the cube decodes to a feasible sampler.
    pub fn decode(
        z: &[f64],
        segments: usize,
        num_features: usize,
        transform_mode: TransformMode,
    ) -> Result<Self> {
        let dim = encoded_dim(segments, num_features);
        if z.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: z.len(),
            });
        }
        if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("encoded sampler must lie in the unit cube"));
        }
        let (raw_e, rest) = z.split_at(segments - 1);
        let (values, raw_c) = rest.split_at(segments + 1);
        let mut interior = raw_e.to_vec();
        interior.sort_by(f64::total_cmp);
        let mut endpoints = Vec::with_capacity(segments + 1);
        endpoints.push(0.0);
        endpoints.extend(interior);
        endpoints.push(1.0);
        let p = SamplerParams {
            segments,
            num_features,
            endpoints,
            values: values.to_vec(),
            coefficients: raw_c.iter().map(|u| 2.0 * u - 1.0).collect(),
            transform_mode,
        };
        p.validate()?;
        Ok(p)
    }

    /// Piecewise-linear profile `H` on `[0, 1]`. Where several endpoints
    /// coincide with `u`, the value of the rightmost one wins.
    pub fn eval_h(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::invalid(format!("H evaluated outside [0, 1] at {u}")));
        }
        Ok(self.eval_h_unchecked(u))
    }

    pub(crate) fn eval_h_unchecked(&self, u: f64) -> f64 {
        let e = &self.endpoints;
        let v = &self.values;
        // largest s with e_s <= u (e_0 = 0 <= u always)
        let s = e.partition_point(|&x| x <= u) - 1;
        if e[s] == u || s == self.segments {
            return v[s];
        }
        let t = (u - e[s]) / (e[s + 1] - e[s]);
        v[s] + t * (v[s + 1] - v[s])
    }

    /// Linear aggregation `G(f) = sum_i c_i f_i`.
    pub fn eval_g(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.num_features {
            return Err(Error::DimensionMismatch {
                expected: self.num_features,
                found: f.len(),
            });
        }
        Ok(self.eval_g_unchecked(f))
    }

    pub(crate) fn eval_g_unchecked(&self, f: &[f64]) -> f64 {
        self.coefficients.iter().zip(f).map(|(c, x)| c * x).sum()
    }

    /// Largest absolute slope of `H`, or infinity if `H` jumps at a
    /// zero-width segment.
    pub fn h_lipschitz(&self) -> f64 {
        let mut best: f64 = 0.0;
        for s in 0..self.segments {
            let de = self.endpoints[s + 1] - self.endpoints[s];
            let dv = (self.values[s + 1] - self.values[s]).abs();
            if de == 0.0 {
                if dv != 0.0 {
                    return f64::INFINITY;
                }
            } else {
                best = best.max(dv / de);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(e: &[f64], v: &[f64], c: &[f64]) -> SamplerParams {
        SamplerParams::new(e.to_vec(), v.to_vec(), c.to_vec(), TransformMode::Cgf).unwrap()
    }

    #[test]
    fn default_search_space_has_ten_coordinates() {
        assert_eq!(encoded_dim(4, 2), 10);
        assert_eq!(
            SamplerParams::uniform(4, 2, TransformMode::Cgf).encoded_dim(),
            10
        );
    }

    #[test]
    fn decode_center_of_cube() {
        let p = SamplerParams::decode(&[0.5; 10], 4, 2, TransformMode::Cgf).unwrap();
        assert_eq!(p.endpoints, vec![0.0, 0.5, 0.5, 0.5, 1.0]);
        assert_eq!(p.values, vec![0.5; 5]);
        assert_eq!(p.coefficients, vec![0.0, 0.0]);
    }

    #[test]
    fn decode_sorts_interior_endpoints() {
        let mut z = vec![0.9, 0.2, 0.4];
        z.extend([0.0; 7]);
        let p = SamplerParams::decode(&z, 4, 2, TransformMode::Cdf).unwrap();
        assert_eq!(p.endpoints, vec![0.0, 0.2, 0.4, 0.9, 1.0]);
        assert_eq!(p.coefficients, vec![-1.0, -1.0]);
    }

    #[test]
    fn decode_rejects_bad_input() {
        assert!(SamplerParams::decode(&[0.5; 9], 4, 2, TransformMode::Cgf).is_err());
        let mut z = vec![0.5; 10];
        z[3] = 1.2;
        assert!(SamplerParams::decode(&z, 4, 2, TransformMode::Cgf).is_err());
    }

    #[test]
    fn validate_catches_infeasible_points() {
        let e = [0.0, 0.5, 1.0];
        assert!(SamplerParams::new(
            e.to_vec(),
            vec![0.0, 1.5, 0.0],
            vec![0.0],
            TransformMode::Cgf
        )
        .is_err());
        assert!(
            SamplerParams::new(e.to_vec(), vec![0.0; 3], vec![2.0], TransformMode::Cgf).is_err()
        );
        assert!(SamplerParams::new(
            vec![0.0, 0.7, 0.5, 1.0],
            vec![0.0; 4],
            vec![0.0],
            TransformMode::Cgf
        )
        .is_err());
        assert!(SamplerParams::new(
            vec![0.1, 0.5, 1.0],
            vec![0.0; 3],
            vec![0.0],
            TransformMode::Cgf
        )
        .is_err());
    }

    #[test]
    fn h_hits_endpoint_values() {
        let p = params(
            &[0.0, 0.2, 0.45, 0.7, 1.0],
            &[0.3, 0.9, 0.1, 0.6, 1.0],
            &[0.0, 0.0],
        );
        for (e, v) in p.endpoints.iter().zip(&p.values) {
            assert_eq!(p.eval_h(*e).unwrap(), *v);
        }
    }

    #[test]
    fn h_interpolates_linearly() {
        let p = params(&[0.0, 1.0], &[0.2, 0.8], &[0.0]);
        assert!((p.eval_h(0.5).unwrap() - 0.5).abs() < 1e-15);
        let zig = params(
            &[0.0, 0.25, 0.5, 0.75, 1.0],
            &[1.0, 0.0, 1.0, 0.0, 1.0],
            &[0.0, 0.0],
        );
        assert!((zig.eval_h(0.125).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn h_zero_width_segment_takes_rightmost_value() {
        let p = params(
            &[0.0, 0.5, 0.5, 0.5, 1.0],
            &[0.0, 0.1, 0.2, 0.3, 1.0],
            &[0.0, 0.0],
        );
        assert_eq!(p.eval_h(0.5).unwrap(), 0.3);
        let left = params(&[0.0, 0.0, 0.5, 1.0], &[0.9, 0.1, 0.1, 0.1], &[0.0]);
        assert_eq!(left.eval_h(0.0).unwrap(), 0.1);
        let right = params(&[0.0, 1.0, 1.0], &[0.0, 0.5, 0.2], &[0.0]);
        assert_eq!(right.eval_h(1.0).unwrap(), 0.2);
    }

    #[test]
    fn h_rejects_out_of_range() {
        let p = SamplerParams::uniform(4, 2, TransformMode::Cgf);
        assert!(p.eval_h(-0.01).is_err());
        assert!(p.eval_h(1.01).is_err());
    }

    #[test]
    fn g_is_a_dot_product() {
        let p = params(&[0.0, 1.0], &[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(p.eval_g(&[0.3, 0.9]).unwrap(), 0.3);
        let q = params(&[0.0, 1.0], &[0.0, 0.0], &[-1.0, 1.0]);
        assert_eq!(q.eval_g(&[0.25, 0.75]).unwrap(), 0.5);
        let zero = params(&[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(zero.eval_g(&[0.6, 0.1]).unwrap(), 0.0);
        assert!(zero.eval_g(&[0.6]).is_err());
    }

    #[test]
    fn json_record_field_names() {
        let p = SamplerParams::uniform(4, 2, TransformMode::Cdf);
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        for key in ["S", "N", "e", "v", "c", "transform_mode"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["transform_mode"], "cdf");
        let back: SamplerParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
