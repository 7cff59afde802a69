//! Player buildings: the setpoint-to-productivity curve, HVAC energy models
//! and hourly occupancy / weather profiles.
//!
//! All temperatures at this interface are °F. Energy models return BTU for
//! one hour of operation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::BusId;

pub const BTU_PER_KWH: f64 = 3412.14;

pub fn btu_to_kwh(btu: f64) -> f64 {
    btu / BTU_PER_KWH
}

pub fn kwh_to_btu(kwh: f64) -> f64 {
    kwh * BTU_PER_KWH
}

pub fn fahrenheit_to_celsius(f: f64) -> f64 {
    (f - 32.0) * 5.0 / 9.0
}

#[derive(Debug, thiserror::Error)]
pub enum BuildingError {
    #[error("setpoint {t_in} °F outside the comfort bracket [{lower}, {upper}]")]
    OutOfBracket { t_in: f64, lower: f64, upper: f64 },
    #[error("{variable} = {value} outside the model domain [{lower}, {upper}]")]
    DomainViolation {
        variable: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("profile table is missing hour {0}")]
    MissingHour(u32),
    #[error("negative occupancy {value} for {building} at hour {hour}")]
    NegativeOccupancy {
        building: String,
        hour: u32,
        value: f64,
    },
    #[error("negative baseline load {value} kW for {building} at hour {hour}")]
    NegativeBaseline {
        building: String,
        hour: u32,
        value: f64,
    },
    #[error("outdoor temperature {value} °F at hour {hour} outside [-40, 130]")]
    WeatherOutOfRange { hour: u32, value: f64 },
    #[error("profile table has no column `{0}`")]
    MissingColumn(String),
    #[error("duplicate hour {0} in profile table")]
    DuplicateHour(u32),
    #[error("malformed profile table: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid energy model: {0}")]
    InvalidModel(String),
    #[error("weights document: {0}")]
    Weights(#[from] serde_json::Error),
}

/// Work productivity as a cubic in indoor Celsius temperature, defined on a
/// °F comfort bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProductivityCurve {
    /// (a1, a2, a3, a0): a1·C + a2·C² + a3·C³ + a0.
    pub coefficients: [f64; 4],
    pub t_lower: f64,
    pub t_upper: f64,
}

impl Default for ProductivityCurve {
    fn default() -> Self {
        Self {
            coefficients: [0.1647524, -0.0058274, 0.0000623, -0.4685328],
            t_lower: 64.0,
            t_upper: 79.0,
        }
    }
}

impl ProductivityCurve {
    pub fn contains(&self, t_in: f64) -> bool {
        (self.t_lower..=self.t_upper).contains(&t_in)
    }

    pub fn productivity(&self, t_in: f64) -> Result<f64, BuildingError> {
        if !self.contains(t_in) {
            return Err(BuildingError::OutOfBracket {
                t_in,
                lower: self.t_lower,
                upper: self.t_upper,
            });
        }
        let c = fahrenheit_to_celsius(t_in);
        let [a1, a2, a3, a0] = self.coefficients;
        Ok(a1 * c + a2 * c * c + a3 * c * c * c + a0)
    }
}

/// Free function form of [`ProductivityCurve::productivity`].
pub fn productivity(curve: &ProductivityCurve, t_in: f64) -> Result<f64, BuildingError> {
    curve.productivity(t_in)
}

/// Affine hourly energy fit `c_t·hour + c_out·T_out + c_in·T_in + c_0` (BTU),
/// multiplied by `scale` for buildings of different size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub c_t: f64,
    pub c_out: f64,
    pub c_in: f64,
    pub c_0: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for RegressionModel {
    fn default() -> Self {
        Self {
            c_t: 2.0443,
            c_out: 1.8823,
            c_in: -1.6305,
            c_0: 2.1181e6,
            scale: 1.0,
        }
    }
}

impl RegressionModel {
    pub const HOURS: (f64, f64) = (10.0, 21.0);
    pub const T_IN: (f64, f64) = (64.0, 79.0);
    pub const T_OUT: (f64, f64) = (50.0, 100.0);

    pub fn energy(&self, hour: u32, t_in: f64, t_out: f64) -> Result<f64, BuildingError> {
        let h = f64::from(hour);
        check("hour", h, Self::HOURS)?;
        check("t_in", t_in, Self::T_IN)?;
        check("t_out", t_out, Self::T_OUT)?;
        let e = self.scale * (self.c_t * h + self.c_out * t_out + self.c_in * t_in + self.c_0);
        Ok(e.max(0.0))
    }
}

fn check(variable: &'static str, value: f64, (lower, upper): (f64, f64)) -> Result<(), BuildingError> {
    if (lower..=upper).contains(&value) {
        Ok(())
    } else {
        Err(BuildingError::DomainViolation {
            variable,
            value,
            lower,
            upper,
        })
    }
}

/// One hidden sigmoid layer, linear output. Inputs are (hour, T_in, T_out),
/// normalized as `(x - offset) * scale` before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeedForwardRaw", into = "FeedForwardRaw")]
pub struct FeedForwardModel {
    hidden: usize,
    input_offset: [f64; 3],
    input_scale: [f64; 3],
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    output_scale: f64,
}

/// Weights file layout: `dims` = [inputs, hidden, outputs], `w1` is
/// hidden × inputs row-major, `w2` is outputs × hidden.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeedForwardRaw {
    dims: [usize; 3],
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    #[serde(default)]
    input_offset: Option<Vec<f64>>,
    #[serde(default)]
    input_scale: Option<Vec<f64>>,
    #[serde(default)]
    output_scale: Option<f64>,
}

impl TryFrom<FeedForwardRaw> for FeedForwardModel {
    type Error = BuildingError;

    fn try_from(r: FeedForwardRaw) -> Result<Self, Self::Error> {
        Self::from_doc(r)
    }
}

impl From<FeedForwardModel> for FeedForwardRaw {
    fn from(m: FeedForwardModel) -> Self {
        FeedForwardRaw {
            dims: [3, m.hidden, 1],
            w1: m.w1,
            b1: m.b1,
            w2: m.w2,
            b2: vec![m.b2],
            input_offset: Some(m.input_offset.to_vec()),
            input_scale: Some(m.input_scale.to_vec()),
            output_scale: Some(m.output_scale),
        }
    }
}

impl FeedForwardModel {
    pub fn from_json(text: &str) -> Result<Self, BuildingError> {
        Self::from_doc(serde_json::from_str(text)?)
    }

    fn from_doc(doc: FeedForwardRaw) -> Result<Self, BuildingError> {
        let [inputs, hidden, outputs] = doc.dims;
        let bad = |m: String| Err(BuildingError::InvalidModel(m));
        if inputs != 3 {
            return bad(format!("expected 3 inputs (hour, t_in, t_out), got {inputs}"));
        }
        if outputs != 1 {
            return bad(format!("expected 1 output, got {outputs}"));
        }
        if hidden == 0 {
            return bad("hidden layer is empty".into());
        }
        if doc.w1.len() != hidden * inputs {
            return bad(format!("w1 has {} entries, dims need {}", doc.w1.len(), hidden * inputs));
        }
        if doc.b1.len() != hidden {
            return bad(format!("b1 has {} entries, dims need {hidden}", doc.b1.len()));
        }
        if doc.w2.len() != hidden {
            return bad(format!("w2 has {} entries, dims need {hidden}", doc.w2.len()));
        }
        if doc.b2.len() != 1 {
            return bad(format!("b2 has {} entries, dims need 1", doc.b2.len()));
        }
        let triple = |v: Option<Vec<f64>>, default: f64, name: &str| -> Result<[f64; 3], BuildingError> {
            match v {
                None => Ok([default; 3]),
                Some(v) => <[f64; 3]>::try_from(v.as_slice())
                    .map_err(|_| BuildingError::InvalidModel(format!("{name} needs 3 entries"))),
            }
        };
        let model = Self {
            hidden,
            input_offset: triple(doc.input_offset, 0.0, "input_offset")?,
            input_scale: triple(doc.input_scale, 1.0, "input_scale")?,
            w1: doc.w1,
            b1: doc.b1,
            w2: doc.w2,
            b2: doc.b2[0],
            output_scale: doc.output_scale.unwrap_or(1.0),
        };
        let all = model
            .w1
            .iter()
            .chain(&model.b1)
            .chain(&model.w2)
            .chain(&model.input_offset)
            .chain(&model.input_scale)
            .chain([&model.b2, &model.output_scale]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite weight".into());
        }
        Ok(model)
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden
    }

    /// Raw network output (BTU), before clamping.
    pub fn forward(&self, hour: f64, t_in: f64, t_out: f64) -> f64 {
        let raw = [hour, t_in, t_out];
        let x: Vec<f64> = (0..3)
            .map(|i| (raw[i] - self.input_offset[i]) * self.input_scale[i])
            .collect();
        let mut out = self.b2;
        for h in 0..self.hidden {
            let z = self.b1[h] + (0..3).map(|i| self.w1[h * 3 + i] * x[i]).sum::<f64>();
            out += self.w2[h] / (1.0 + (-z).exp());
        }
        out * self.output_scale
    }
}

/// Energy on a regular (hour, T_in, T_out) grid, trilinearly interpolated.
/// Queries off the grid are held at the nearest edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedModel {
    pub hours: Vec<f64>,
    pub t_in: Vec<f64>,
    pub t_out: Vec<f64>,
    /// Row-major over (hour, t_in, t_out), BTU.
    pub values: Vec<f64>,
}

impl TabulatedModel {
    pub fn validate(&self) -> Result<(), BuildingError> {
        for (name, axis) in [("hours", &self.hours), ("t_in", &self.t_in), ("t_out", &self.t_out)] {
            if axis.is_empty() || axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(BuildingError::InvalidModel(format!(
                    "axis {name} must be nonempty and strictly increasing"
                )));
            }
        }
        let n = self.hours.len() * self.t_in.len() * self.t_out.len();
        if self.values.len() != n || self.values.iter().any(|v| !v.is_finite()) {
            return Err(BuildingError::InvalidModel(format!(
                "table needs {n} finite values, has {}",
                self.values.len()
            )));
        }
        Ok(())
    }

    fn in_range(&self, hour: f64, t_in: f64, t_out: f64) -> bool {
        let inside = |axis: &[f64], v: f64| v >= axis[0] && v <= axis[axis.len() - 1];
        inside(&self.hours, hour) && inside(&self.t_in, t_in) && inside(&self.t_out, t_out)
    }

    pub fn interpolate(&self, hour: f64, t_in: f64, t_out: f64) -> f64 {
        let (h0, h1, fh) = bracket(&self.hours, hour);
        let (i0, i1, fi) = bracket(&self.t_in, t_in);
        let (o0, o1, fo) = bracket(&self.t_out, t_out);
        let (ni, no) = (self.t_in.len(), self.t_out.len());
        let at = |h: usize, i: usize, o: usize| self.values[(h * ni + i) * no + o];
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let plane = |h: usize| {
            lerp(
                lerp(at(h, i0, o0), at(h, i0, o1), fo),
                lerp(at(h, i1, o0), at(h, i1, o1), fo),
                fi,
            )
        };
        lerp(plane(h0), plane(h1), fh)
    }
}

fn bracket(axis: &[f64], v: f64) -> (usize, usize, f64) {
    let last = axis.len() - 1;
    if last == 0 || v <= axis[0] {
        return (0, 0, 0.0);
    }
    if v >= axis[last] {
        return (last, last, 0.0);
    }
    let hi = axis.partition_point(|&a| a <= v);
    let lo = hi - 1;
    (lo, hi, (v - axis[lo]) / (axis[hi] - axis[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyModel {
    LinearRegression(RegressionModel),
    FeedForward(FeedForwardModel),
    Tabulated(TabulatedModel),
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel::LinearRegression(RegressionModel::default())
    }
}

impl EnergyModel {
    /// Hourly HVAC energy in BTU. The regression rejects inputs outside its
    /// fitted domain; the other variants extrapolate with a warning.
    pub fn energy(&self, hour: u32, t_in: f64, t_out: f64) -> Result<f64, BuildingError> {
        match self {
            EnergyModel::LinearRegression(m) => m.energy(hour, t_in, t_out),
            EnergyModel::FeedForward(m) => {
                let h = f64::from(hour);
                if !(RegressionModel::T_IN.0..=RegressionModel::T_IN.1).contains(&t_in)
                    || !(RegressionModel::T_OUT.0..=RegressionModel::T_OUT.1).contains(&t_out)
                    || hour > 23
                {
                    log::warn!("feed-forward model extrapolating at hour {hour}, t_in {t_in}, t_out {t_out}");
                }
                Ok(m.forward(h, t_in, t_out).max(0.0))
            }
            EnergyModel::Tabulated(m) => {
                let h = f64::from(hour);
                if !m.in_range(h, t_in, t_out) {
                    log::warn!("tabulated model extrapolating at hour {hour}, t_in {t_in}, t_out {t_out}");
                }
                Ok(m.interpolate(h, t_in, t_out).max(0.0))
            }
        }
    }

    pub fn validate(&self) -> Result<(), BuildingError> {
        match self {
            EnergyModel::Tabulated(t) => t.validate(),
            _ => Ok(()),
        }
    }
}

pub fn energy(model: &EnergyModel, hour: u32, t_in: f64, t_out: f64) -> Result<f64, BuildingError> {
    model.energy(hour, t_in, t_out)
}

/// Values over a contiguous run of hours starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourSeries {
    pub start: u32,
    pub values: Vec<f64>,
}

impl HourSeries {
    pub fn get(&self, hour: u32) -> Option<f64> {
        let i = hour.checked_sub(self.start)? as usize;
        self.values.get(i).copied()
    }

    pub fn hours(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.values.len() as u32).map(move |i| self.start + i)
    }

    pub fn covers(&self, hour: u32) -> bool {
        self.get(hour).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingProfile {
    pub bus: BusId,
    pub name: String,
    /// persons
    pub occupancy: HourSeries,
    /// kW of non-HVAC load
    pub baseline_load: HourSeries,
    pub energy_model: EnergyModel,
    pub productivity: ProductivityCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherProfile {
    /// °F
    pub outdoor: HourSeries,
}

/// What the caller knows about each building before reading the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingSpec {
    pub name: String,
    pub bus: BusId,
    #[serde(default)]
    pub energy_model: EnergyModel,
    #[serde(default)]
    pub productivity: ProductivityCurve,
}

pub const WEATHER_BAND_F: (f64, f64) = (-40.0, 130.0);

/// Reads the hourly profile table (`hour, t_out_f, <b>_occupancy,
/// <b>_baseline_kw` for each building `b`) and builds one profile per spec.
pub fn load_profiles(
    csv_text: &str,
    specs: &[BuildingSpec],
) -> Result<(Vec<BuildingProfile>, WeatherProfile), BuildingError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BuildingError::MissingColumn(name.to_string()))
    };
    let hour_col = col("hour")?;
    let tout_col = col("t_out_f")?;
    let building_cols = specs
        .iter()
        .map(|s| Ok((col(&format!("{}_occupancy", s.name))?, col(&format!("{}_baseline_kw", s.name))?)))
        .collect::<Result<Vec<_>, BuildingError>>()?;

    // hour -> (t_out, [(occ, base)])
    let mut rows: BTreeMap<u32, (f64, Vec<(f64, f64)>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64, BuildingError> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                BuildingError::InvalidModel(format!(
                    "column `{}` value `{raw}` is not a number",
                    &headers[i]
                ))
            })
        };
        let hour_raw = rec.get(hour_col).unwrap_or("");
        let hour: u32 = hour_raw
            .parse()
            .map_err(|_| BuildingError::InvalidModel(format!("hour `{hour_raw}` is not an integer")))?;
        let t_out = field(tout_col)?;
        if !(WEATHER_BAND_F.0..=WEATHER_BAND_F.1).contains(&t_out) {
            return Err(BuildingError::WeatherOutOfRange { hour, value: t_out });
        }
        let mut vals = Vec::with_capacity(specs.len());
        for (spec, &(oc, bc)) in specs.iter().zip(&building_cols) {
            let occ = field(oc)?;
            if occ < 0.0 {
                return Err(BuildingError::NegativeOccupancy {
                    building: spec.name.clone(),
                    hour,
                    value: occ,
                });
            }
            let base = field(bc)?;
            if base < 0.0 {
                return Err(BuildingError::NegativeBaseline {
                    building: spec.name.clone(),
                    hour,
                    value: base,
                });
            }
            vals.push((occ, base));
        }
        if rows.insert(hour, (t_out, vals)).is_some() {
            return Err(BuildingError::DuplicateHour(hour));
        }
    }

    let start = rows.keys().next().copied().unwrap_or(0);
    let end = rows.keys().next_back().copied().unwrap_or(0);
    if let Some(gap) = (start..=end).find(|h| !rows.contains_key(h)) {
        return Err(BuildingError::MissingHour(gap));
    }
    let series = |f: &dyn Fn(&(f64, Vec<(f64, f64)>)) -> f64| HourSeries {
        start,
        values: rows.values().map(f).collect(),
    };
    let weather = WeatherProfile {
        outdoor: series(&|r| r.0),
    };
    let mut profiles = Vec::with_capacity(specs.len());
    for (b, spec) in specs.iter().enumerate() {
        spec.energy_model.validate()?;
        profiles.push(BuildingProfile {
            bus: spec.bus,
            name: spec.name.clone(),
            occupancy: series(&|r| r.1[b].0),
            baseline_load: series(&|r| r.1[b].1),
            energy_model: spec.energy_model.clone(),
            productivity: spec.productivity,
        });
    }
    Ok((profiles, weather))
}
