//! Named fault points for crash-safety testing.
//!
//! Storage protocols call [`Faults::hit`] at every step boundary. An armed
//! point returns [`Error::Injected`], which callers propagate unchanged; the
//! test harness then drops the store and reopens it to simulate a crash.

use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
struct Armed {
    point: Option<&'static str>,
    skip: usize,
    fired: Vec<&'static str>,
}

#[derive(Debug, Clone, Default)]
pub struct Faults {
    inner: Option<Arc<Mutex<Armed>>>,
}

impl Faults {
    /// An injector that never fires.
    pub fn none() -> Self {
        Faults { inner: None }
    }

    pub fn enabled() -> Self {
        Faults {
            inner: Some(Arc::new(Mutex::new(Armed::default()))),
        }
    }

    /// Fires once at `point`, after letting `skip` earlier hits pass.
    pub fn arm(&self, point: &'static str, skip: usize) {
        if let Some(inner) = &self.inner {
            let mut a = inner.lock();
            a.point = Some(point);
            a.skip = skip;
        }
    }

    pub fn disarm(&self) {
        if let Some(inner) = &self.inner {
            inner.lock().point = None;
        }
    }

    pub fn fired(&self) -> Vec<&'static str> {
        self.inner
            .as_ref()
            .map(|i| i.lock().fired.clone())
            .unwrap_or_default()
    }

    #[inline]
    pub fn hit(&self, point: &'static str) -> Result<()> {
        let Some(inner) = &self.inner else {
            return Ok(());
        };
        let mut a = inner.lock();
        if a.point != Some(point) {
            return Ok(());
        }
        if a.skip > 0 {
            a.skip -= 1;
            return Ok(());
        }
        a.point = None;
        a.fired.push(point);
        Err(Error::Injected(point))
    }
}
