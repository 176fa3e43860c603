//! Amplitude/phase decomposition of complex spectra.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::Result;
use crate::tensor::{ComplexTensor, RealTensor};

/// Amplitude and phase of a spectrum. Amplitude is non-negative and phase
/// lies in `(-pi, pi]` when produced by [`amp_phase`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub amplitude: RealTensor,
    pub phase: RealTensor,
}

/// Quadrant-correct angle in `(-pi, pi]`; zero at the origin.
pub fn phase_of(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let p = z.im.atan2(z.re);
    // atan2 returns -pi for a negative real axis approached from -0.0.
    if p == -PI {
        PI
    } else {
        p
    }
}

pub fn amp_phase(x: &ComplexTensor) -> Result<SpectralPair> {
    x.ensure_finite("spectrum")?;
    Ok(SpectralPair {
        amplitude: x.map(|z| z.norm()),
        phase: x.map(|&z| phase_of(z)),
    })
}

/// `A * (cos P + i sin P)` elementwise. The amplitude may be negative, which
/// is the case for enhanced amplitude maps.
pub fn polar_to_complex(amplitude: &RealTensor, phase: &RealTensor) -> Result<ComplexTensor> {
    amplitude.zip_map(phase, |&a, &p| Complex64::new(a * p.cos(), a * p.sin()))
}

pub fn recompose(pair: &SpectralPair) -> Result<ComplexTensor> {
    polar_to_complex(&pair.amplitude, &pair.phase)
}
