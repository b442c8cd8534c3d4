//! The synchronized encoder/decoder pair of a zooming quantizer.
//!
//! Both sides hold the same [`QuantizerState`]: a hypercube
//! `𝒬(ξ, E) = {x : ‖x − ξ‖∞ ≤ E}` split into `Mⁿ` equal cells. A received
//! packet zooms in by `Λ/M`; a lost one zooms out by `Λ`, so the true state
//! stays inside the region as long as `Λ` bounds the flow map's expansion.
//!
//! Wire convention: the cell index along axis `j` is the `j`-th base-`M` digit
//! of the symbol, axis 0 least significant. A point on an interior cell
//! boundary belongs to the higher-index cell; the outer boundary folds into
//! the last cell.

use thiserror::Error;

use crate::numerics::{InfNorm, Matrix, Vector};
use crate::plant::PlantError;

/// Relative slack accepted before declaring saturation, see
/// [`QuantizerState::saturation_tolerance`].
pub const SATURATION_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizerError {
    #[error("quantizer saturated: ‖x − ξ‖∞ = {distance} exceeds E = {radius}")]
    Saturation { distance: f64, radius: f64 },
    #[error("symbol {symbol} is outside the alphabet of size {alphabet}")]
    SymbolRange { symbol: u64, alphabet: u64 },
    #[error("invalid quantizer: {0}")]
    Invalid(String),
    #[error("zoom update needs the decoded value when the packet arrived")]
    MissingDecodedValue,
    #[error("flow map failed during zoom update: {0}")]
    Flow(#[from] PlantError),
}

/// Index of a cell of the quantization region, `0 ≤ value < Mⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EncodedSymbol(pub u64);

/// Packet outcome at a sampling instant, `θ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transmission {
    Received,
    Lost,
}

impl Transmission {
    pub fn from_loss_flag(lost: bool) -> Self {
        if lost {
            Transmission::Lost
        } else {
            Transmission::Received
        }
    }

    /// `θ_k ∈ {0, 1}`.
    pub fn theta(self) -> u8 {
        match self {
            Transmission::Received => 0,
            Transmission::Lost => 1,
        }
    }
}

/// φ_T as seen by the quantizer: the state one sampling period ahead.
pub trait FlowMap {
    fn advance(&self, x: &Vector, u: &Vector) -> Result<Vector, PlantError>;
}

impl<F> FlowMap for F
where
    F: Fn(&Vector, &Vector) -> Result<Vector, PlantError>,
{
    fn advance(&self, x: &Vector, u: &Vector) -> Result<Vector, PlantError> {
        self(x, u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerState {
    center: Vector,
    radius: f64,
    levels: u32,
}

impl QuantizerState {
    pub fn new(center: Vector, radius: f64, levels: u32) -> Result<Self, QuantizerError> {
        if levels < 2 {
            return Err(QuantizerError::Invalid(format!("M must be ≥ 2, got {levels}")));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(QuantizerError::Invalid(format!(
                "E must be finite and ≥ 0, got {radius}"
            )));
        }
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(QuantizerError::Invalid(
                "center must be a finite nonempty vector".into(),
            ));
        }
        let n = center.len() as u32;
        if (levels as u64).checked_pow(n).is_none() {
            return Err(QuantizerError::Invalid(format!(
                "alphabet {levels}^{n} does not fit in 64 bits"
            )));
        }
        Ok(Self { center, radius, levels })
    }

    /// Initial state with `ξ₀ = 0`.
    pub fn at_origin(dim: usize, radius: f64, levels: u32) -> Result<Self, QuantizerError> {
        Self::new(Vector::zeros(dim), radius, levels)
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `Mⁿ`.
    pub fn alphabet_size(&self) -> u64 {
        (self.levels as u64).pow(self.dim() as u32)
    }

    /// Bits per sample, `n log₂ M`.
    pub fn bits_per_sample(&self) -> f64 {
        self.dim() as f64 * (self.levels as f64).log2()
    }

    /// Closed-region membership `‖x − ξ‖∞ ≤ E`.
    /// `1e-12·(E + ‖ξ‖∞)`. Once `E` falls below the rounding error of a state
    /// of size `‖ξ‖∞`, the distance `‖x − ξ‖∞` is pure rounding noise, so the
    /// slack scales with the center as well as the radius.
    pub fn saturation_tolerance(&self) -> f64 {
        SATURATION_SLACK * (self.radius + self.center.inf_norm())
    }

    pub fn contains(&self, x: &Vector) -> bool {
        (x - &self.center).inf_norm() <= self.radius
    }

    pub fn encode(&self, x: &Vector) -> Result<EncodedSymbol, QuantizerError> {
        if x.len() != self.dim() {
            return Err(QuantizerError::Invalid(format!(
                "state has {} entries, quantizer {}",
                x.len(),
                self.dim()
            )));
        }
        let distance = (x - &self.center).inf_norm();
        if !(distance <= self.radius + self.saturation_tolerance()) {
            return Err(QuantizerError::Saturation {
                distance,
                radius: self.radius,
            });
        }
        if self.radius == 0.0 {
            return Ok(EncodedSymbol(0));
        }
        let m = self.levels as u64;
        let scale = self.levels as f64 / (2.0 * self.radius);
        let mut symbol = 0u64;
        let mut place = 1u64;
        for j in 0..self.dim() {
            let raw = ((x[j] - self.center[j] + self.radius) * scale).floor();
            let idx = raw.clamp(0.0, (m - 1) as f64) as u64;
            symbol += idx * place;
            place = place.saturating_mul(m);
        }
        Ok(EncodedSymbol(symbol))
    }

    /// Center of the cell named by `symbol`.
    pub fn decode(&self, symbol: EncodedSymbol) -> Result<Vector, QuantizerError> {
        let alphabet = self.alphabet_size();
        if symbol.0 >= alphabet {
            return Err(QuantizerError::SymbolRange {
                symbol: symbol.0,
                alphabet,
            });
        }
        let m = self.levels as u64;
        let width = 2.0 * self.radius / self.levels as f64;
        let mut rest = symbol.0;
        Ok(Vector::from_fn(self.dim(), |j, _| {
            let idx = rest % m;
            rest /= m;
            self.center[j] - self.radius + width * (idx as f64 + 0.5)
        }))
    }

    /// Advances both replicas one sample:
    /// received ⇒ `ξ⁺ = φ_T(q, Kq)`, `E⁺ = (Λ/M)E`;
    /// lost ⇒ `ξ⁺ = φ_T(ξ, 0)`, `E⁺ = ΛE`.
    pub fn zoom_update(
        &self,
        outcome: Transmission,
        decoded: Option<&Vector>,
        flow: &impl FlowMap,
        gain: &Matrix,
        lambda: f64,
    ) -> Result<Self, QuantizerError> {
        let (center, radius) = match outcome {
            Transmission::Received => {
                let q = decoded.ok_or(QuantizerError::MissingDecodedValue)?;
                let u = gain * q;
                (flow.advance(q, &u)?, lambda / self.levels as f64 * self.radius)
            }
            Transmission::Lost => {
                let u = Vector::zeros(gain.nrows());
                (flow.advance(&self.center, &u)?, lambda * self.radius)
            }
        };
        Ok(Self {
            center,
            radius,
            levels: self.levels,
        })
    }
}
