use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

/// Early fusion: concatenates modality blocks column-wise, in the given order.
/// All blocks must describe the same windows (same row count and participants).
pub fn fuse_features(blocks: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let Some(first) = blocks.first() else {
        return Err(Error::Invalid("nothing to fuse".into()));
    };
    let mut out = first.clone();
    for b in &blocks[1..] {
        if b.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                found: b.len(),
            });
        }
        if b.participants != out.participants || b.labels != out.labels {
            return Err(Error::Invalid("fused blocks are not aligned to the same windows".into()));
        }
        out.x = out.x.hstack(&b.x)?;
        out.names.extend(b.names.iter().cloned());
    }
    Ok(out)
}
