pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod hybrid;
pub mod linalg;
pub mod methods;
pub mod model;
pub mod oracle;
pub mod quantum;
pub mod semiclassics;
pub mod spectrum;

pub use error::{Error, Result};
pub use methods::{MethodRegistry, RunSettings, SpectrumMethod};
