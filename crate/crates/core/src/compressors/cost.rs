use serde::{Deserialize, Serialize};

use super::{CompressorKind, CompressorSpec};

/// Wire-size model for one broadcast message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Bytes per real number.
    #[serde(default = "CostModel::default_real_bytes")]
    pub real_bytes: u64,
    /// Bytes per transmitted coordinate index (top-k).
    #[serde(default)]
    pub index_bytes: u64,
    /// Bytes per transmitted integer (scaled flooring).
    #[serde(default = "CostModel::default_integer_bytes")]
    pub integer_bytes: u64,
    /// Fixed message size of the unbiased l-bits quantizer.
    #[serde(default = "CostModel::default_lbits_message_bytes")]
    pub lbits_message_bytes: u64,
}

impl CostModel {
    fn default_real_bytes() -> u64 {
        8
    }

    fn default_integer_bytes() -> u64 {
        4
    }

    fn default_lbits_message_bytes() -> u64 {
        20
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            real_bytes: Self::default_real_bytes(),
            index_bytes: 0,
            integer_bytes: Self::default_integer_bytes(),
            lbits_message_bytes: Self::default_lbits_message_bytes(),
        }
    }
}

/// Bytes one node sends per round. Depends only on the kind, its
/// parameters and `d`, never on the vector being compressed.
pub fn byte_cost(spec: &CompressorSpec, d: usize, model: &CostModel) -> u64 {
    if let Some(bytes) = spec.byte_cost_override {
        return bytes;
    }
    let d = d as u64;
    match &spec.kind {
        CompressorKind::Identity | CompressorKind::SaturatedQuantizer { .. } => {
            model.real_bytes * d
        }
        CompressorKind::Scalarization { .. } => model.real_bytes,
        CompressorKind::Topk { k } => *k as u64 * (model.real_bytes + model.index_bytes),
        CompressorKind::UniformQuantizer => model.real_bytes + d.div_ceil(8),
        CompressorKind::ScaledFloor { .. } => model.integer_bytes * d,
        CompressorKind::UnbiasedLbits { .. } => model.lbits_message_bytes,
    }
}
