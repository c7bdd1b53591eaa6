//! CNN-structured measurement operators.

mod coherence;
mod crelu;
mod filterbank;
mod format;
mod structured;

pub use coherence::{coherence, CoherenceValue};
pub use crelu::{crelu_reconstruct, crelu_split};
pub use filterbank::{new_random_filterbank, normalize_rows, Dims, FilterBank};
pub use format::{read_filterbank, write_filterbank, MAGIC};
pub use structured::{build_operator, InputGeometry, StructuredOperator};
