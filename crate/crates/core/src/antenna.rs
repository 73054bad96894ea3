//! Transmission-line model of a rectangular microstrip patch, plus the
//! substrate and application catalog used as benchmark use cases.
//!
//! All quantities are SI (Hz, meters). Display helpers convert to GHz / mm.

use crate::scalar::Scalar;
use std::io::Write;
use thiserror::Error;

/// Speed of light used by the model. Published patch widths back-solve to
/// exactly this rounded value, not 299 792 458 m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Standard substrate height shared by every catalog design.
pub const STANDARD_HEIGHT_M: f64 = 1.5e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AntennaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate denominator: effective permittivity {0} <= 0.258")]
    DegenerateDenominator(f64),
    #[error("non-physical result: patch length {0} m is not positive")]
    NonPhysicalResult(f64),
}

pub type Result<T, E = AntennaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignInput<T> {
    /// Center frequency, Hz.
    pub f_r: T,
    /// Relative dielectric constant of the substrate.
    pub eps_r: T,
    /// Substrate height, meters.
    pub h: T,
}

impl<T: Scalar> DesignInput<T> {
    pub fn new(f_r: T, eps_r: T, h: T) -> Result<Self> {
        let input = Self { f_r, eps_r, h };
        input.validate()?;
        Ok(input)
    }

    /// Convenience constructor from presentation units.
    pub fn from_ghz_mm(f_ghz: T, eps_r: T, h_mm: T) -> Result<Self> {
        Self::new(f_ghz * T::lit(1e9), eps_r, h_mm * T::lit(1e-3))
    }

    pub fn validate(&self) -> Result<()> {
        check_frequency(self.f_r)?;
        check_permittivity(self.eps_r)?;
        check_positive("substrate height", self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchDims<T> {
    /// Patch width, meters.
    pub w: T,
    /// Patch length, meters.
    pub l: T,
}

impl<T: Scalar> PatchDims<T> {
    pub fn from_mm(w_mm: T, l_mm: T) -> Self {
        Self {
            w: w_mm * T::lit(1e-3),
            l: l_mm * T::lit(1e-3),
        }
    }

    pub fn w_mm(&self) -> T {
        self.w * T::lit(1e3)
    }

    pub fn l_mm(&self) -> T {
        self.l * T::lit(1e3)
    }
}

/// Intermediate quantities of the model, exposed for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediateModel<T> {
    pub eps_eff: T,
    /// Effective (electrical) length, meters.
    pub l_eff: T,
    /// Fringing length extension at each radiating edge, meters.
    pub delta_l: T,
}

fn check_positive<T: Scalar>(what: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(AntennaError::InvalidInput(format!("{what} must be positive and finite, got {v}")))
    }
}

fn check_frequency<T: Scalar>(f_r: T) -> Result<()> {
    check_positive("frequency", f_r)
}

fn check_permittivity<T: Scalar>(eps_r: T) -> Result<()> {
    if eps_r >= T::one() && eps_r.is_finite() {
        Ok(())
    } else {
        Err(AntennaError::InvalidInput(format!(
            "relative permittivity must be >= 1, got {eps_r}"
        )))
    }
}

/// Patch width giving efficient radiation: `c/(2 f_r) · sqrt(2/(eps_r + 1))`.
pub fn patch_width<T: Scalar>(f_r: T, eps_r: T) -> Result<T> {
    check_frequency(f_r)?;
    check_permittivity(eps_r)?;
    let c = T::lit(SPEED_OF_LIGHT);
    let two = T::lit(2.0);
    Ok(c / (two * f_r) * (two / (eps_r + T::one())).sqrt())
}

/// Effective permittivity of the microstrip (`12h/W` fringing form).
pub fn effective_permittivity<T: Scalar>(eps_r: T, h: T, w: T) -> Result<T> {
    check_permittivity(eps_r)?;
    check_positive("substrate height", h)?;
    check_positive("patch width", w)?;
    let one = T::one();
    let two = T::lit(2.0);
    let fringe = (one + T::lit(12.0) * h / w).sqrt().recip();
    Ok((eps_r + one) / two + (eps_r - one) / two * fringe)
}

/// Effective length `c / (2 f_r sqrt(eps_eff))`.
pub fn effective_length<T: Scalar>(f_r: T, eps_eff: T) -> Result<T> {
    check_frequency(f_r)?;
    check_permittivity(eps_eff)?;
    Ok(T::lit(SPEED_OF_LIGHT) / (T::lit(2.0) * f_r * eps_eff.sqrt()))
}

/// Hammerstad length extension due to fringing fields.
pub fn length_extension<T: Scalar>(h: T, eps_eff: T, w: T) -> Result<T> {
    check_positive("substrate height", h)?;
    check_positive("patch width", w)?;
    if !eps_eff.is_finite() {
        return Err(AntennaError::InvalidInput(format!(
            "effective permittivity must be finite, got {eps_eff}"
        )));
    }
    if eps_eff <= T::lit(0.258) {
        return Err(AntennaError::DegenerateDenominator(eps_eff.as_f64()));
    }
    let ratio = w / h;
    let num = (eps_eff + T::lit(0.3)) * (ratio + T::lit(0.264));
    let den = (eps_eff - T::lit(0.258)) * (ratio + T::lit(0.8));
    Ok(h * T::lit(0.412) * num / den)
}

/// Full model: width, then effective permittivity, effective length and
/// length extension, giving `L = L_eff − 2ΔL`.
pub fn patch_model<T: Scalar>(input: &DesignInput<T>) -> Result<(PatchDims<T>, IntermediateModel<T>)> {
    input.validate()?;
    let w = patch_width(input.f_r, input.eps_r)?;
    let eps_eff = effective_permittivity(input.eps_r, input.h, w)?;
    let l_eff = effective_length(input.f_r, eps_eff)?;
    let delta_l = length_extension(input.h, eps_eff, w)?;
    let l = l_eff - T::lit(2.0) * delta_l;
    if !(l > T::zero()) {
        return Err(AntennaError::NonPhysicalResult(l.as_f64()));
    }
    Ok((
        PatchDims { w, l },
        IntermediateModel {
            eps_eff,
            l_eff,
            delta_l,
        },
    ))
}

pub fn patch_dimensions<T: Scalar>(input: &DesignInput<T>) -> Result<PatchDims<T>> {
    patch_model(input).map(|(dims, _)| dims)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Substrate {
    pub name: &'static str,
    pub eps_r: f64,
}

/// One application/substrate pairing with its reference dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct UseCase {
    pub label: &'static str,
    /// Short identifier used in report column names.
    pub slug: &'static str,
    pub substrate: Substrate,
    pub f_r: f64,
    pub h: f64,
    /// Published reference dimensions.
    pub target: PatchDims<f64>,
}

impl UseCase {
    pub fn design_input<T: Scalar>(&self) -> DesignInput<T> {
        DesignInput {
            f_r: T::lit(self.f_r),
            eps_r: T::lit(self.substrate.eps_r),
            h: T::lit(self.h),
        }
    }
}

/// A named application band (GHz); several applications list two bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Application {
    pub name: &'static str,
    pub frequencies_ghz: &'static [f64],
}

pub const RT_DUROID: Substrate = Substrate { name: "RT Duroid", eps_r: 2.2 };
pub const TACONIC_TLX6: Substrate = Substrate { name: "Taconic TLX 6", eps_r: 2.65 };
/// Datasheet value 3.48; the 85.660 mm reference width at 1.17 GHz requires it.
pub const ROGERS_4350: Substrate = Substrate { name: "Rogers 4350", eps_r: 3.48 };
pub const FR4: Substrate = Substrate { name: "FR4 Glass Epoxy", eps_r: 4.36 };
pub const DUROID_6010: Substrate = Substrate { name: "Duroid 6010", eps_r: 10.5 };

pub fn substrates() -> Vec<Substrate> {
    vec![RT_DUROID, TACONIC_TLX6, ROGERS_4350, FR4, DUROID_6010]
}

pub fn applications() -> Vec<Application> {
    const fn app(name: &'static str, frequencies_ghz: &'static [f64]) -> Application {
        Application { name, frequencies_ghz }
    }
    vec![
        app("Wi-Fi 802.11n", &[2.5]),
        app("Wi-Fi 802.11ac", &[5.0]),
        app("Wi-Fi 802.11ad", &[5.0, 60.0]),
        app("Bluetooth", &[2.48]),
        app("2G, 3G", &[0.9, 1.8]),
        app("4G", &[0.85, 2.3]),
        app("WiMAX", &[2.3]),
        app("Satellite", &[15.0]),
        app("GPS L1", &[1.51]),
        app("GPS L5", &[1.17]),
    ]
}

/// The five benchmark use cases, in report column order.
pub fn catalog() -> Vec<UseCase> {
    let h = STANDARD_HEIGHT_M;
    let case = |label, slug, substrate, f_ghz: f64, w_mm, l_mm| UseCase {
        label,
        slug,
        substrate,
        f_r: f_ghz * 1e9,
        h,
        target: PatchDims::from_mm(w_mm, l_mm),
    };
    vec![
        case("RT Duroid for Wi-Fi 802.11ac", "rtd_wifi_ac", RT_DUROID, 5.0, 23.717, 19.398),
        case("TLX 6 for Bluetooth", "tlx6_bluetooth", TACONIC_TLX6, 2.48, 44.772, 36.587),
        case("Roger 4350 for GPS L5", "ro4350_gps_l5", ROGERS_4350, 1.17, 85.660, 68.429),
        case("FR 4 for WiMAX", "fr4_wimax", FR4, 2.3, 39.837, 30.934),
        case("Duroid 6010 for 3G", "d6010_3g", DUROID_6010, 1.8, 34.752, 25.622),
    ]
}

pub fn find_use_case(label: &str) -> Option<UseCase> {
    catalog().into_iter().find(|u| u.label == label || u.slug == label)
}

/// Writes the catalog as `label,substrate,eps_r,f_ghz,h_mm,W_mm,L_mm`.
pub fn write_catalog_csv<W: Write>(out: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["label", "substrate", "eps_r", "f_ghz", "h_mm", "W_mm", "L_mm"])?;
    for u in catalog() {
        wr.write_record([
            u.label.to_string(),
            u.substrate.name.to_string(),
            u.substrate.eps_r.to_string(),
            format!("{}", u.f_r / 1e9),
            format!("{}", u.h * 1e3),
            format!("{:.3}", u.target.w_mm()),
            format!("{:.3}", u.target.l_mm()),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
