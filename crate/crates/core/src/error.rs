use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("layer index {index} out of range 1..={max}")]
    LayerIndex { index: usize, max: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not an energy model: {0}")]
    NotEnergyModel(String),

    #[error("training diverged at epoch {epoch} (pair {pair}): non-finite loss")]
    Divergence { epoch: usize, pair: usize },

    #[error("construction failed: {0}")]
    Construction(String),
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
