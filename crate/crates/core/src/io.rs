//! Plain-text data files: profiles, images, spectra, budget tables and PGM.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file read back through the matching parser reproduces the values
//! bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::budget::{BudgetEntry, BUDGET_CSV_HEADER};
use crate::error::{GsdError, Result};
use crate::imaging::{ImageGrid, Profile};

pub const PROFILE_MAGIC: &str = "# gsdscope profile v1";
pub const IMAGE_MAGIC: &str = "# gsdscope image v1";

/// Profile as read from disk, with optional per-point shot counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredProfile {
    pub profile: Profile,
    pub shots: Option<Vec<u32>>,
}

impl MeasuredProfile {
    pub fn new(profile: Profile, shots: Option<Vec<u32>>) -> Result<Self> {
        if let Some((i, p)) = profile.value.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(GsdError::parse(p.to_string(), format!("row {}: probability outside [0, 1]", i + 1)));
        }
        if let Some(s) = &shots {
            if s.len() != profile.len() {
                return Err(GsdError::domain("shot column length differs from profile length"));
            }
            if s.contains(&0) {
                return Err(GsdError::parse("0", "shots must be at least 1"));
            }
        }
        Ok(Self { profile, shots })
    }
}

/// Splits off the first line and checks it against `magic`.
fn strip_magic<'a>(text: &'a str, magic: &str) -> Result<&'a str> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != magic {
        return Err(GsdError::parse(first.trim_end(), format!("expected header `{magic}`")));
    }
    Ok(rest)
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| GsdError::parse(self.header.join(","), format!("missing column `{name}`")))
    }

    fn floats(&self, col: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t = r[col].trim();
                let v: f64 = t.parse().map_err(|_| GsdError::parse(t, format!("row {}: not a number", i + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(GsdError::parse(t, format!("row {}: not finite", i + 1)))
                }
            })
            .collect()
    }

    fn counts(&self, col: usize) -> Result<Vec<u32>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t = r[col].trim();
                t.parse().map_err(|_| GsdError::parse(t, format!("row {}: not a shot count", i + 1)))
            })
            .collect()
    }
}

fn read_table(body: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| GsdError::parse("header", e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_owned).collect())
                .map_err(|e| GsdError::parse("csv", e.to_string()))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(Table { header, rows })
}

pub fn format_profile_csv(profile: &Profile) -> String {
    let mut out = format!("{PROFILE_MAGIC}\n");
    match &profile.uncertainty {
        Some(u) => {
            out.push_str("coord_m,p_d,sigma_p\n");
            for ((x, p), s) in profile.coordinate.iter().zip(&profile.value).zip(u) {
                let _ = writeln!(out, "{x},{p},{s}");
            }
        }
        None => {
            out.push_str("coord_m,p_d\n");
            for (x, p) in profile.coordinate.iter().zip(&profile.value) {
                let _ = writeln!(out, "{x},{p}");
            }
        }
    }
    out
}

/// Reads a profile file. Besides `sigma_p` an optional `shots` column is
/// accepted.
pub fn parse_profile_csv(text: &str) -> Result<MeasuredProfile> {
    let table = read_table(strip_magic(text, PROFILE_MAGIC)?)?;
    let x = table.floats(table.require("coord_m")?)?;
    let p = table.floats(table.require("p_d")?)?;
    let sigma = table.column("sigma_p").map(|c| table.floats(c)).transpose()?;
    let shots = table.column("shots").map(|c| table.counts(c)).transpose()?;
    let profile = Profile::new(x, p, sigma).map_err(|e| GsdError::parse("coord_m", e.to_string()))?;
    MeasuredProfile::new(profile, shots)
}

pub fn format_image_csv(image: &ImageGrid) -> String {
    let mut out = format!("{IMAGE_MAGIC}\ny_B_m,z_t_m,p_d\n");
    for (row, b) in image.b_coords.iter().enumerate() {
        for (col, a) in image.a_coords.iter().enumerate() {
            let _ = writeln!(out, "{a},{b},{}", image.get(col, row));
        }
    }
    out
}

/// Reads an image written row by row (`z_t` outer, `y_B` inner).
pub fn parse_image_csv(text: &str) -> Result<ImageGrid> {
    let table = read_table(strip_magic(text, IMAGE_MAGIC)?)?;
    let a = table.floats(table.require("y_B_m")?)?;
    let b = table.floats(table.require("z_t_m")?)?;
    let values = table.floats(table.require("p_d")?)?;
    if a.is_empty() {
        return Err(GsdError::parse("", "image has no rows"));
    }
    let width = b.iter().take_while(|&&v| v.to_bits() == b[0].to_bits()).count();
    if a.len() % width != 0 {
        return Err(GsdError::parse(a.len().to_string(), "row count is not a multiple of the image width"));
    }
    let a_coords = a[..width].to_vec();
    let b_coords: Vec<f64> = b.iter().step_by(width).copied().collect();
    for (i, (&ai, &bi)) in a.iter().zip(&b).enumerate() {
        if ai.to_bits() != a_coords[i % width].to_bits() || bi.to_bits() != b_coords[i / width].to_bits() {
            return Err(GsdError::parse(format!("{ai},{bi}"), format!("row {}: not on a rectangular grid", i + 1)));
        }
    }
    ImageGrid::new(a_coords, b_coords, values)
}

/// Plain PGM (P2), rows along `b`, grey level `round(255·p)`.
pub fn format_pgm(image: &ImageGrid) -> String {
    let mut out = format!("P2\n{} {}\n255\n", image.width(), image.height());
    for row in 0..image.height() {
        let line: Vec<String> = image
            .row(row)
            .iter()
            .map(|p| ((255.0 * p.clamp(0.0, 1.0)).round() as u8).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Sideband spectrum: detuning in Hz, excitation probability, shots.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub detuning: Vec<f64>,
    pub p: Vec<f64>,
    pub shots: Vec<u32>,
}

impl Spectrum {
    pub fn as_profile(&self) -> Result<Profile> {
        Profile::new(self.detuning.clone(), self.p.clone(), None)
    }
}

pub fn format_spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("detuning_hz,p_d,shots\n");
    for ((d, p), n) in s.detuning.iter().zip(&s.p).zip(&s.shots) {
        let _ = writeln!(out, "{d},{p},{n}");
    }
    out
}

pub fn parse_spectrum_csv(text: &str) -> Result<Spectrum> {
    let table = read_table(text)?;
    let detuning = table.floats(table.require("detuning_hz")?)?;
    let p = table.floats(table.require("p_d")?)?;
    let shots = table.counts(table.require("shots")?)?;
    let profile = Profile::new(detuning.clone(), p.clone(), None).map_err(|e| GsdError::parse("detuning_hz", e.to_string()))?;
    MeasuredProfile::new(profile, Some(shots.clone()))?;
    Ok(Spectrum { detuning, p, shots })
}

pub fn format_budget_csv(entries: &[BudgetEntry]) -> String {
    let mut out = BUDGET_CSV_HEADER.join(",");
    out.push('\n');
    for e in entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.channel.name(),
            e.coefficient,
            e.s_limit_over_w0k2,
            e.sigma_limit_derived,
            e.sigma_limit_closed_form,
            e.reference_s_decade,
            e.reference_sigma_nm
        );
    }
    out
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| GsdError::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| GsdError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| GsdError::Io(format!("{}: {e}", path.display())))
}
