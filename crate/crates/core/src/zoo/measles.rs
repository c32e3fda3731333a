//! Gravity-coupled SEIR metapopulation for recurrent measles, with seasonal
//! transmission, lagged births and biweekly aggregated case reports.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_prob, check_rate, seir_block, unknown_param, Configurable};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    BlockStructure, IncidenceModel, InitialDistribution, ModelSpec, PerCapitaLimits, Schedule,
    TimeMatrix, TimeVector,
};

/// Proportion of the year taken up by school terms.
pub const TERM_FRACTION: f64 = 0.759;

/// School terms and holidays over one year of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoolCalendar {
    pub steps_per_year: usize,
    /// Inclusive 0-based step-of-year ranges of holidays.
    pub holidays: Vec<(usize, usize)>,
    /// Step of year at which the school year starts.
    pub school_start: usize,
}

impl Default for SchoolCalendar {
    /// Half-week steps: Christmas, Easter, summer and autumn half-term
    /// holidays, 25 of 104 steps, so terms cover 79/104 ≈ 0.7596 of the year.
    fn default() -> Self {
        SchoolCalendar {
            steps_per_year: 104,
            holidays: vec![(0, 1), (29, 32), (57, 71), (86, 87), (102, 103)],
            school_start: 72,
        }
    }
}

impl SchoolCalendar {
    pub fn is_term(&self, step_of_year: usize) -> bool {
        !self.holidays.iter().any(|&(a, b)| (a..=b).contains(&step_of_year))
    }

    pub fn term_fraction(&self) -> f64 {
        let n = (0..self.steps_per_year).filter(|&j| self.is_term(j)).count();
        n as f64 / self.steps_per_year as f64
    }

    /// Step of year for the transition into step `t ≥ 1`.
    pub fn step_of_year(&self, t: usize) -> usize {
        (t.max(1) - 1) % self.steps_per_year
    }

    fn check(&self) -> Result<()> {
        let spy = self.steps_per_year;
        if spy == 0
            || self.school_start >= spy
            || !self.is_term(self.school_start)
            || self.holidays.iter().any(|&(a, b)| a > b || b >= spy)
        {
            return Err(Error::Config(format!("invalid school calendar {self:?}")));
        }
        Ok(())
    }
}

/// City data for the gravity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityConfig {
    pub names: Vec<String>,
    /// Initial populations `n_k`.
    pub populations: Vec<u64>,
    /// Symmetric inter-city distances `s_kl`.
    pub distances: Vec<Vec<f64>>,
    /// Annual births entering the susceptibles in each model year, already
    /// shifted by the school-entry delay. `births[k][y]`.
    pub births: Vec<Vec<f64>>,
    /// Annual per-capita death rate, `death_rates[k][y]`.
    pub death_rates: Vec<Vec<f64>>,
    /// Reporting rate of I→R transitions per city.
    pub reporting: Vec<f64>,
    #[serde(default)]
    pub calendar: SchoolCalendar,
    /// Observation period in steps.
    #[serde(default = "default_period")]
    pub period: usize,
}

fn default_period() -> usize {
    4
}

impl GravityConfig {
    pub fn cities(&self) -> usize {
        self.populations.len()
    }

    pub fn years(&self) -> usize {
        self.births.first().map_or(0, |b| b.len())
    }

    /// Multiplies every population and birth count by `factor`; per-capita
    /// rates, distances and reporting are unchanged.
    pub fn scaled(&self, factor: u64) -> GravityConfig {
        let mut cfg = self.clone();
        for n in &mut cfg.populations {
            *n *= factor;
        }
        for b in cfg.births.iter_mut().flatten() {
            *b *= factor as f64;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.cities();
        if j == 0 {
            return Err(Error::Config("gravity model needs at least one city".into()));
        }
        let sizes = [
            self.names.len(),
            self.distances.len(),
            self.births.len(),
            self.death_rates.len(),
            self.reporting.len(),
        ];
        if sizes.iter().any(|&s| s != j) {
            return Err(Error::Config(format!(
                "city count mismatch: {j} populations but names/distances/births/deaths/reporting sizes {sizes:?}"
            )));
        }
        if self.populations.iter().any(|&n| n == 0) {
            return Err(Error::Validation("populations must be positive".into()));
        }
        for (k, row) in self.distances.iter().enumerate() {
            if row.len() != j {
                return Err(Error::Config(format!("distance row {} has length {}", k + 1, row.len())));
            }
            for (l, &d) in row.iter().enumerate() {
                if d != self.distances[l][k] {
                    return Err(Error::Validation("distance matrix must be symmetric".into()));
                }
                if k != l && !(d > 0.0 && d.is_finite()) {
                    return Err(Error::Validation(format!(
                        "distance between cities {} and {} must be positive",
                        k + 1,
                        l + 1
                    )));
                }
            }
        }
        for &r in &self.reporting {
            check_prob("reporting rate", r)?;
        }
        let years = self.years();
        if years == 0
            || self.births.iter().any(|b| b.len() != years)
            || self.death_rates.iter().any(|d| d.len() != years)
        {
            return Err(Error::Config(
                "birth and death schedules must cover the same positive number of years for every city".into(),
            ));
        }
        for v in self.births.iter().flatten() {
            check_rate("births", *v)?;
        }
        for v in self.death_rates.iter().flatten() {
            check_prob("death rate", *v)?;
        }
        if self.period == 0 {
            return Err(Error::Config("observation period must be positive".into()));
        }
        self.calendar.check()
    }

    /// Number of model steps covered by the birth and death schedules.
    pub fn horizon(&self) -> usize {
        self.years() * self.calendar.steps_per_year
    }

    /// `c_kl = v_kl / n_k = g (s̄/n̄) n_l / s_kl` for `k ≠ l`, zero on the diagonal.
    pub fn coupling(&self, g: f64) -> Vec<Vec<f64>> {
        let j = self.cities();
        let nbar = self.populations.iter().sum::<u64>() as f64 / j as f64;
        let mut sbar = 0.0;
        if j > 1 {
            for k in 0..j {
                for l in 0..j {
                    if k != l {
                        sbar += self.distances[k][l];
                    }
                }
            }
            sbar /= (j * (j - 1)) as f64;
        }
        (0..j)
            .map(|k| {
                (0..j)
                    .map(|l| {
                        if k == l {
                            0.0
                        } else {
                            g * sbar / nbar * self.populations[l] as f64 / self.distances[k][l]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn year_of(&self, t: usize) -> usize {
        ((t.max(1) - 1) / self.calendar.steps_per_year).min(self.years() - 1)
    }

    /// Loads cities, births and deaths from CSV.
    ///
    /// * `cities.csv`: `name,population,x,y,reporting` with planar coordinates.
    /// * `births.csv`: `city,year,births` (annual births).
    /// * `deaths.csv`: `city,year,rate` (annual per-capita death rate).
    ///
    /// Model years are the years of the death schedule. Births enter
    /// `birth_lag` years after they occur; years before the first birth
    /// record reuse the earliest one.
    pub fn from_csv_dir(dir: &Path, birth_lag: i32) -> Result<Self> {
        #[derive(Deserialize)]
        struct City {
            name: String,
            population: u64,
            x: f64,
            y: f64,
            reporting: f64,
        }
        #[derive(Deserialize)]
        struct Births {
            city: String,
            year: i32,
            births: f64,
        }
        #[derive(Deserialize)]
        struct Deaths {
            city: String,
            year: i32,
            rate: f64,
        }
        fn read<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
            let mut rdr = csv::Reader::from_path(path)?;
            rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
        }

        let cities: Vec<City> = read(&dir.join("cities.csv"))?;
        let births: Vec<Births> = read(&dir.join("births.csv"))?;
        let deaths: Vec<Deaths> = read(&dir.join("deaths.csv"))?;
        let index: BTreeMap<&str, usize> =
            cities.iter().enumerate().map(|(i, c)| (c.name.as_str(), i)).collect();
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("unknown city {name:?} in schedule")))
        };
        let j = cities.len();
        let mut birth_map = vec![BTreeMap::new(); j];
        for b in &births {
            birth_map[lookup(&b.city)?].insert(b.year, b.births);
        }
        let mut death_map = vec![BTreeMap::new(); j];
        for d in &deaths {
            death_map[lookup(&d.city)?].insert(d.year, d.rate);
        }
        let years: Vec<i32> = death_map.first().map(|m| m.keys().copied().collect()).unwrap_or_default();
        if death_map.iter().any(|m| m.keys().copied().collect::<Vec<_>>() != years) {
            return Err(Error::Config("death schedules must cover the same years for every city".into()));
        }
        let mut lagged = Vec::with_capacity(j);
        for (k, m) in birth_map.iter().enumerate() {
            let Some((&first, _)) = m.iter().next() else {
                return Err(Error::Config(format!("no birth records for city {}", cities[k].name)));
            };
            let row: Vec<f64> = years
                .iter()
                .map(|&y| {
                    let src = (y - birth_lag).max(first);
                    m.range(..=src).next_back().map(|(_, &v)| v).unwrap_or(0.0)
                })
                .collect();
            lagged.push(row);
        }
        let distances = cities
            .iter()
            .map(|a| cities.iter().map(|b| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()).collect())
            .collect();
        let cfg = GravityConfig {
            names: cities.iter().map(|c| c.name.clone()).collect(),
            populations: cities.iter().map(|c| c.population).collect(),
            distances,
            births: lagged,
            death_rates: death_map.iter().map(|m| m.values().copied().collect()).collect(),
            reporting: cities.iter().map(|c| c.reporting).collect(),
            calendar: SchoolCalendar::default(),
            period: default_period(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameters `θ = (β̄, ρ, γ, g, a, c, π₀)`; `π₀` lists the S, E and I
/// fractions with R taking the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeaslesParams {
    pub beta_bar: f64,
    pub rho: f64,
    pub gamma: f64,
    pub g: f64,
    pub a: f64,
    pub c: f64,
    pub pi0: [f64; 3],
}

impl MeaslesParams {
    pub fn initial_probs(&self) -> Result<[f64; 4]> {
        let [s, e, i] = self.pi0;
        let r = 1.0 - s - e - i;
        let p = [s, e, i, r];
        if p.iter().any(|v| !(*v >= -1e-15)) {
            return Err(Error::Validation(format!("initial fractions {p:?} are not a distribution")));
        }
        Ok(p.map(|v| v.max(0.0)))
    }

    /// Transmission rate in term and holiday.
    pub fn seasonal_beta(&self) -> (f64, f64) {
        let p = TERM_FRACTION;
        ((1.0 + 2.0 * (1.0 - p) * self.a) * self.beta_bar, (1.0 - 2.0 * p * self.a) * self.beta_bar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeaslesConfig {
    pub gravity: GravityConfig,
    pub params: MeaslesParams,
}

impl Configurable for MeaslesConfig {
    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let p = &mut self.params;
        match name {
            "beta_bar" => p.beta_bar = value,
            "rho" => p.rho = value,
            "gamma" => p.gamma = value,
            "g" => p.g = value,
            "a" => p.a = value,
            "c" => p.c = value,
            "pi0_s" => p.pi0[0] = value,
            "pi0_e" => p.pi0[1] = value,
            "pi0_i" => p.pi0[2] = value,
            _ => return Err(unknown_param("measles", name)),
        }
        Ok(())
    }

    fn build(&self) -> Result<ModelSpec> {
        build_measles_gravity(&self.gravity, &self.params)
    }
}

pub fn build_measles_gravity(cfg: &GravityConfig, theta: &MeaslesParams) -> Result<ModelSpec> {
    cfg.validate()?;
    for (name, v) in [("beta_bar", theta.beta_bar), ("rho", theta.rho), ("gamma", theta.gamma), ("g", theta.g)] {
        check_rate(name, v)?;
    }
    check_prob("a", theta.a)?;
    check_prob("c", theta.c)?;
    let pi0 = theta.initial_probs()?;
    let (beta_term, beta_holiday) = theta.seasonal_beta();
    if beta_holiday < 0.0 {
        return Err(Error::Validation(format!("holiday transmission {beta_holiday} is negative")));
    }

    let j = cfg.cities();
    let m = 4 * j;
    let coupling = Arc::new(cfg.coupling(theta.g));
    let inv_pop: Arc<Vec<f64>> = Arc::new(cfg.populations.iter().map(|&n| 1.0 / n as f64).collect());
    let calendar = cfg.calendar.clone();
    let (rho, gamma) = (theta.rho, theta.gamma);

    let blocks = move |t: usize, s: &[f64]| -> Vec<Matrix> {
        let beta = if calendar.is_term(calendar.step_of_year(t)) { beta_term } else { beta_holiday };
        let eta: Vec<f64> = (0..j).map(|k| s[4 * k + 2] * inv_pop[k]).collect();
        (0..j)
            .map(|k| {
                let cross: f64 = coupling[k].iter().zip(&eta).map(|(c, e)| c * (e + eta[k])).sum();
                let f = beta * (eta[k] + cross);
                Matrix::from_row_major(4, seir_block(f, rho, gamma, 1.0).to_vec())
            })
            .collect()
    };
    let blocks = Arc::new(blocks);
    let dense_blocks = Arc::clone(&blocks);
    let dense = move |t: usize, s: &[f64]| {
        let mut full = Matrix::zeros(m);
        for (k, b) in dense_blocks(t, s).iter().enumerate() {
            full.set_block(4 * k, b);
        }
        full
    };

    let spy = cfg.calendar.steps_per_year as f64;
    let births = cfg.births.clone();
    let school_start = cfg.calendar.school_start;
    let cohort = theta.c;
    let gc = cfg.clone();
    let immigration = move |t: usize| {
        let y = gc.year_of(t);
        let pulse = gc.calendar.step_of_year(t) == school_start;
        let mut alpha = vec![0.0; m];
        for k in 0..j {
            let b = births[k][y];
            alpha[4 * k] = (1.0 - cohort) * b / spy + if pulse { cohort * b } else { 0.0 };
        }
        alpha
    };
    let gd = cfg.clone();
    let survival = move |t: usize| {
        let y = gd.year_of(t);
        (0..m).map(|i| (1.0 - gd.death_rates[i / 4][y]).powf(1.0 / spy)).collect()
    };

    let mut q = Matrix::zeros(m);
    for k in 0..j {
        q[(4 * k + 2, 4 * k + 3)] = cfg.reporting[k];
    }
    let total: f64 = cfg.populations.iter().sum::<u64>() as f64;
    let initial = InitialDistribution::Product(
        cfg.populations
            .iter()
            .map(|&n| InitialDistribution::Multinomial { n, probs: pi0.to_vec() })
            .collect(),
    );
    let limit_initial: Vec<f64> =
        cfg.populations.iter().flat_map(|&n| pi0.map(|p| n as f64 * p / total)).collect();
    let alpha_fn = immigration.clone();
    let names = cfg
        .names
        .iter()
        .flat_map(|c| ["S", "E", "I", "R"].map(|x| format!("{x}_{c}")))
        .collect();

    Ok(ModelSpec::new(initial, dense)
        .with_names(names)
        .with_survival(TimeVector::varying(survival))
        .with_immigration(TimeVector::varying(immigration))
        .with_incidence(IncidenceModel {
            reporting: TimeMatrix::constant(q),
            schedule: Schedule::Every(cfg.period),
            open_population: true,
        })
        .with_blocks(BlockStructure {
            block_size: 4,
            blocks: j,
            kernel: Arc::new(move |t: usize, s: &[f64]| blocks(t, s)),
        })
        .with_limits(PerCapitaLimits {
            scale: total,
            initial: limit_initial,
            immigration: TimeVector::varying(move |t| alpha_fn(t).into_iter().map(|a| a / total).collect()),
            clutter: TimeVector::constant(vec![0.0; m]),
        }))
}

/// A synthetic five-city configuration: ten model years of half-weekly steps.
pub fn synthetic_five_cities() -> GravityConfig {
    let populations = vec![1_200_000, 650_000, 400_000, 250_000, 150_000];
    let coords = [(0.0, 0.0), (60.0, 20.0), (-40.0, 70.0), (120.0, -30.0), (30.0, -90.0)];
    let distances = coords
        .iter()
        .map(|a| coords.iter().map(|b: &(f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
        .collect();
    let years = 10;
    let births = populations
        .iter()
        .map(|&n| (0..years).map(|y| n as f64 * (0.019 + 0.0005 * y as f64)).collect())
        .collect();
    let death_rates = populations.iter().map(|_| vec![0.011; years]).collect();
    GravityConfig {
        names: ["A", "B", "C", "D", "E"].iter().map(|s| s.to_string()).collect(),
        populations,
        distances,
        births,
        death_rates,
        reporting: vec![0.55, 0.5, 0.6, 0.45, 0.5],
        calendar: SchoolCalendar::default(),
        period: 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    fn theta() -> MeaslesParams {
        MeaslesParams { beta_bar: 12.0, rho: 0.45, gamma: 0.7, g: 0.05, a: 0.3, c: 0.4, pi0: [0.05, 1e-4, 1e-4] }
    }

    #[test]
    fn default_calendar_term_fraction() {
        let cal = SchoolCalendar::default();
        assert!((cal.term_fraction() - TERM_FRACTION).abs() < 1.0 / 104.0);
        assert!(cal.is_term(cal.school_start));
    }

    #[test]
    fn seasonal_beta_takes_two_values_averaging_to_mean() {
        let cfg = synthetic_five_cities();
        let th = theta();
        let (hi, lo) = th.seasonal_beta();
        let p = TERM_FRACTION;
        assert!((p * hi + (1.0 - p) * lo - th.beta_bar).abs() < 1e-12);
        // With one infective per capita in city 1 only and g = 0 the hazard is β_t.
        let mut s = vec![0.0; 20];
        s[2] = cfg.populations[0] as f64;
        let mut iso = th;
        iso.g = 0.0;
        let spec0 = build_measles_gravity(&cfg, &iso).unwrap();
        let b0 = spec0.blocks.as_ref().unwrap();
        let mut values = Vec::new();
        for t in 1..=104 {
            let k = (b0.kernel)(t, &s);
            values.push(-k[0][(0, 0)].ln());
        }
        let term = values.iter().filter(|v| (**v - hi).abs() < 1e-9).count();
        let hol = values.iter().filter(|v| (**v - lo).abs() < 1e-9).count();
        assert_eq!(term + hol, 104);
        assert_eq!(term, 79);
    }

    #[test]
    fn synthetic_config_is_valid() {
        let cfg = synthetic_five_cities();
        let spec = build_measles_gravity(&cfg, &theta()).unwrap();
        assert!(validate_spec(&spec, 208).is_empty(), "{:?}", validate_spec(&spec, 208));
        assert_eq!(spec.compartments, 20);
    }

    #[test]
    fn cohort_pulse_and_uniform_entry() {
        let cfg = synthetic_five_cities();
        let spec = build_measles_gravity(&cfg, &theta()).unwrap();
        let year: f64 = (1..=104).map(|t| spec.immigration.at(t)[0]).sum();
        assert!((year - cfg.births[0][0]).abs() < 1e-6 * year);
        let start = cfg.calendar.school_start + 1;
        let pulse = spec.immigration.at(start)[0];
        let base = spec.immigration.at(start + 1)[0];
        assert!((pulse - base - 0.4 * cfg.births[0][0]).abs() < 1e-6);
        assert_eq!(spec.immigration.at(5)[1], 0.0);
    }

    #[test]
    fn mismatched_schedules_rejected() {
        let mut cfg = synthetic_five_cities();
        cfg.births.pop();
        assert!(build_measles_gravity(&cfg, &theta()).is_err());
        let mut cfg = synthetic_five_cities();
        cfg.distances[0][1] = 3.0;
        assert!(build_measles_gravity(&cfg, &theta()).is_err());
    }
}
