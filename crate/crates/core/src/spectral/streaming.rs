//! Frame-at-a-time STFT and iSTFT for the causal path.
//!
//! Feeding a signal hop by hop through [`StreamingStft`] yields exactly the
//! columns of the offline STFT with causal padding. [`StreamingIstft`] emits
//! `hop` samples per column; its output stream is the offline inverse delayed
//! by `frame - hop` samples.

use num_complex::Complex64;

use super::{Stft, StftConfig};
use crate::error::{Error, Result};

pub struct StreamingStft {
    engine: Stft,
    history: Vec<f64>,
    scratch: Vec<f64>,
}

impl StreamingStft {
    pub fn new(config: StftConfig) -> Result<Self> {
        let engine = Stft::new(config.causal())?;
        let frame = config.frame_len();
        Ok(StreamingStft {
            history: vec![0.0; frame],
            scratch: vec![0.0; config.fft_size],
            engine,
        })
    }

    pub fn config(&self) -> &StftConfig {
        self.engine.config()
    }

    /// Consumes exactly one hop of samples and writes the next column.
    pub fn push_into(&mut self, hop: &[f64], column: &mut [Complex64]) -> Result<()> {
        let h = self.engine.config().hop();
        if hop.len() != h {
            return Err(Error::Shape(format!(
                "expected {h} samples, got {}",
                hop.len()
            )));
        }
        if column.len() != self.engine.config().num_bins() {
            return Err(Error::Shape(format!(
                "column has {} bins, expected {}",
                column.len(),
                self.engine.config().num_bins()
            )));
        }
        self.history.rotate_left(h);
        let frame = self.history.len();
        self.history[frame - h..].copy_from_slice(hop);
        self.engine
            .transform_frame(&self.history, &mut self.scratch, column);
        Ok(())
    }

    pub fn push(&mut self, hop: &[f64]) -> Result<Vec<Complex64>> {
        let mut column = vec![Complex64::default(); self.engine.config().num_bins()];
        self.push_into(hop, &mut column)?;
        Ok(column)
    }

    pub fn reset(&mut self) {
        self.history.fill(0.0);
    }
}

pub struct StreamingIstft {
    engine: Stft,
    overlap: Vec<f64>,
    column: Vec<Complex64>,
    time: Vec<f64>,
}

impl StreamingIstft {
    pub fn new(config: StftConfig) -> Result<Self> {
        let engine = Stft::new(config.causal())?;
        Ok(StreamingIstft {
            overlap: vec![0.0; config.frame_len()],
            column: vec![Complex64::default(); config.num_bins()],
            time: vec![0.0; config.fft_size],
            engine,
        })
    }

    /// Samples between an input sample entering [`StreamingStft`] and the
    /// corresponding output sample leaving this synthesizer.
    pub fn latency(&self) -> usize {
        let c = self.engine.config();
        c.frame_len() - c.hop()
    }

    /// Adds one column and writes the `hop` samples that are now complete.
    pub fn push_into(&mut self, column: &[Complex64], out: &mut [f64]) -> Result<()> {
        let hop = self.engine.config().hop();
        if column.len() != self.column.len() {
            return Err(Error::Shape(format!(
                "column has {} bins, expected {}",
                column.len(),
                self.column.len()
            )));
        }
        if out.len() != hop {
            return Err(Error::Shape(format!(
                "output needs {hop} samples, got {}",
                out.len()
            )));
        }
        self.column.copy_from_slice(column);
        self.engine.inverse_frame(&mut self.column, &mut self.time);
        let frame = self.overlap.len();
        for ((acc, x), w) in self
            .overlap
            .iter_mut()
            .zip(&self.time[..frame])
            .zip(self.engine.synthesis_window())
        {
            *acc += x * w;
        }
        let inv = 1.0 / self.engine.cola();
        for (o, v) in out.iter_mut().zip(&self.overlap[..hop]) {
            *o = v * inv;
        }
        self.overlap.rotate_left(hop);
        self.overlap[frame - hop..].fill(0.0);
        Ok(())
    }

    pub fn push(&mut self, column: &[Complex64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.engine.config().hop()];
        self.push_into(column, &mut out)?;
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.overlap.fill(0.0);
    }
}
