use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Trajectory, Waypoint, HORIZON_STEPS};

pub type Token = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenizerError {
    #[error("waypoint ({0}, {1}) outside the tokenizer range")]
    OutOfRange(f64, f64),
    #[error("expected {expected} numeric tokens, found {found}")]
    Length { expected: usize, found: usize },
    #[error("token {token} at position {position} is not a {axis} bin")]
    WrongToken { token: Token, position: usize, axis: char },
    #[error("bad tokenizer spec: {0}")]
    Spec(String),
}

/// Uniform bins over a lateral and a longitudinal range. Token ids are the
/// x bins, then the y bins, then BOS, EOS and SEP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajTokenizer {
    pub bin_width: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
}

impl Default for TrajTokenizer {
    fn default() -> Self {
        Self {
            bin_width: 0.25,
            x_range: [-8.0, 8.0],
            y_range: [-2.0, 62.0],
        }
    }
}

impl TrajTokenizer {
    pub fn validate(&self) -> Result<(), TokenizerError> {
        let ok_range = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[1] > r[0];
        if !(self.bin_width > 0.0 && ok_range(self.x_range) && ok_range(self.y_range)) {
            return Err(TokenizerError::Spec(format!("{self:?}")));
        }
        Ok(())
    }

    fn bins(&self, range: [f64; 2]) -> usize {
        ((range[1] - range[0]) / self.bin_width).round() as usize
    }

    pub fn n_x_bins(&self) -> usize {
        self.bins(self.x_range)
    }

    pub fn n_y_bins(&self) -> usize {
        self.bins(self.y_range)
    }

    pub fn bos(&self) -> Token {
        (self.n_x_bins() + self.n_y_bins()) as Token
    }

    pub fn eos(&self) -> Token {
        self.bos() + 1
    }

    pub fn sep(&self) -> Token {
        self.bos() + 2
    }

    pub fn vocab_size(&self) -> usize {
        self.n_x_bins() + self.n_y_bins() + 3
    }

    /// Token count of one trajectory response.
    pub fn response_len(&self) -> usize {
        2 * HORIZON_STEPS
    }

    /// Whether position `i` of a response holds an x bin (else a y bin).
    pub fn is_x_position(i: usize) -> bool {
        i.is_multiple_of(2)
    }

    fn bin(v: f64, range: [f64; 2], n: usize, width: f64) -> Option<usize> {
        if !(range[0]..=range[1]).contains(&v) {
            return None;
        }
        Some((((v - range[0]) / width).floor() as usize).min(n - 1))
    }

    pub fn encode_waypoint(&self, w: Waypoint) -> Result<[Token; 2], TokenizerError> {
        let bx = Self::bin(w.x, self.x_range, self.n_x_bins(), self.bin_width);
        let by = Self::bin(w.y, self.y_range, self.n_y_bins(), self.bin_width);
        match (bx, by) {
            (Some(bx), Some(by)) => Ok([bx as Token, (self.n_x_bins() + by) as Token]),
            _ => Err(TokenizerError::OutOfRange(w.x, w.y)),
        }
    }

    /// `[x1, y1, x2, y2, ...]`
    pub fn encode(&self, traj: &Trajectory) -> Result<Vec<Token>, TokenizerError> {
        let mut out = Vec::with_capacity(self.response_len());
        for w in traj.iter() {
            out.extend(self.encode_waypoint(*w)?);
        }
        Ok(out)
    }

    /// Bin center of a token valid at response position `position`.
    pub fn value(&self, token: Token, position: usize) -> Result<f64, TokenizerError> {
        let t = token as usize;
        let (nx, ny) = (self.n_x_bins(), self.n_y_bins());
        if Self::is_x_position(position) {
            if t < nx {
                return Ok(self.x_range[0] + (t as f64 + 0.5) * self.bin_width);
            }
        } else if (nx..nx + ny).contains(&t) {
            return Ok(self.y_range[0] + ((t - nx) as f64 + 0.5) * self.bin_width);
        }
        Err(TokenizerError::WrongToken {
            token,
            position,
            axis: if Self::is_x_position(position) { 'x' } else { 'y' },
        })
    }

    pub fn decode(&self, tokens: &[Token]) -> Result<Trajectory, TokenizerError> {
        if tokens.len() != self.response_len() {
            return Err(TokenizerError::Length {
                expected: self.response_len(),
                found: tokens.len(),
            });
        }
        let mut pts = Vec::with_capacity(HORIZON_STEPS);
        for (i, pair) in tokens.chunks_exact(2).enumerate() {
            pts.push(Waypoint::new(self.value(pair[0], 2 * i)?, self.value(pair[1], 2 * i + 1)?));
        }
        Ok(Trajectory::try_from(pts).expect("bin centers are finite"))
    }
}
