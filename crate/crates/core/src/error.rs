use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// An input violates a structural requirement of the operation.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Quadrature or root finding failed to reach its tolerance.
    #[error("numeric failure: {msg} (achieved estimate {estimate:e})")]
    Numeric { msg: String, estimate: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

/// Captures the first error raised inside an infallible callback, such as a
/// quadrature integrand.
#[derive(Default)]
pub(crate) struct ErrSlot(std::cell::RefCell<Option<Error>>);

impl ErrSlot {
    pub(crate) fn take(&self, r: Result<f64>) -> f64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    }

    pub(crate) fn finish<T>(self, v: T) -> Result<T> {
        match self.0.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}
