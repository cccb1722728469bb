//! Binary snapshot of a model plus the scaling matrices of one task.

use std::path::Path;

use crate::codec::{CodecError, Reader, Writer};
use crate::linalg::Matrix;
use crate::network::{Mlp, ScalingMatrix};

const TAG: &[u8; 8] = b"TRGPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub task: usize,
    pub model: Mlp,
    pub scalings: Vec<ScalingMatrix>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(TAG, VERSION);
        w.usize(self.task);
        w.usize(self.model.layers().len());
        self.model.layers().iter().for_each(|m| w.matrix(m));
        w.usize(self.model.heads().len());
        self.model.heads().iter().for_each(|m| w.matrix(m));
        w.usize(self.scalings.len());
        for s in &self.scalings {
            w.usize(s.old_task);
            w.usize(s.layer);
            w.matrix(&s.q);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader::with_header(bytes, TAG, VERSION)?;
        let task = r.usize()?;
        let layers = (0..r.usize()?).map(|_| r.matrix()).collect::<Result<Vec<Matrix>, _>>()?;
        let heads = (0..r.usize()?).map(|_| r.matrix()).collect::<Result<Vec<Matrix>, _>>()?;
        let mut scalings = Vec::new();
        for _ in 0..r.usize()? {
            scalings.push(ScalingMatrix {
                old_task: r.usize()?,
                layer: r.usize()?,
                q: r.matrix()?,
            });
        }
        r.finish()?;
        let model = Mlp::from_layers(layers, heads).map_err(|e| CodecError::Invalid(e.to_string()))?;
        Ok(Self { task, model, scalings })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::HeadMode;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let model = Mlp::new(5, &[4], 3, HeadMode::PerTask, 2, &mut rng);
        let ck = Checkpoint {
            task: 1,
            model,
            scalings: vec![ScalingMatrix::identity(0, 1, 2)],
        };
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
