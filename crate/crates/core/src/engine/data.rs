//! Price panels: CSV ingestion, export, and construction from simulations.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{correlated_universe, SimulatedPanel, UniverseSpec};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Additional price series (e.g. sector sub-indices) aligned with a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBlock {
    pub names: Vec<String>,
    /// `prices[i][t]`, `None` where the cell was empty.
    pub prices: Vec<Vec<Option<f64>>>,
}

impl SeriesBlock {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub benchmark_name: String,
    pub benchmark: Vec<f64>,
    pub assets: SeriesBlock,
    pub sectors: Option<SeriesBlock>,
}

impl PricePanel {
    /// Number of return observations.
    pub fn n_returns(&self) -> usize {
        self.dates.len().saturating_sub(1)
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.assets.names
    }

    /// Benchmark log-returns; entry t is ln(P[t+1]/P[t]).
    pub fn benchmark_returns(&self) -> Vec<f64> {
        self.benchmark.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dates.len();
        let here = Path::new("<panel>");
        if n < 2 {
            return Err(Error::Input("panel needs at least two dates".into()));
        }
        if let Some(k) = self.dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Format {
                path: here.into(),
                line: k + 3,
                message: format!("dates not strictly increasing at {}", self.dates[k + 1]),
            });
        }
        if self.benchmark.len() != n {
            return Err(Error::Dimension { expected: n, actual: self.benchmark.len() });
        }
        for block in std::iter::once(&self.assets).chain(self.sectors.as_ref()) {
            if block.prices.len() != block.names.len() {
                return Err(Error::Dimension { expected: block.names.len(), actual: block.prices.len() });
            }
            for s in &block.prices {
                if s.len() != n {
                    return Err(Error::Dimension { expected: n, actual: s.len() });
                }
            }
        }
        let all = self
            .benchmark
            .iter()
            .copied()
            .chain(self.assets.prices.iter().flatten().flatten().copied())
            .chain(self.sectors.iter().flat_map(|s| s.prices.iter().flatten().flatten().copied()));
        for p in all {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Input(format!("non-positive or non-finite price {p}")));
            }
        }
        Ok(())
    }

    /// The panel restricted to the first `rows` dates.
    pub fn truncated(&self, rows: usize) -> PricePanel {
        let cut = |b: &SeriesBlock| SeriesBlock {
            names: b.names.clone(),
            prices: b.prices.iter().map(|s| s[..rows.min(s.len())].to_vec()).collect(),
        };
        PricePanel {
            dates: self.dates[..rows.min(self.dates.len())].to_vec(),
            benchmark_name: self.benchmark_name.clone(),
            benchmark: self.benchmark[..rows.min(self.benchmark.len())].to_vec(),
            assets: cut(&self.assets),
            sectors: self.sectors.as_ref().map(cut),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_block(file, path, &self.dates, &self.benchmark_name, &self.benchmark, &self.assets)
    }

    pub fn write_sectors_csv(&self, path: &Path) -> Result<()> {
        let Some(sectors) = &self.sectors else {
            return Err(Error::Input("panel has no sector block".into()));
        };
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_block(file, path, &self.dates, &self.benchmark_name, &self.benchmark, sectors)
    }

    /// Attaches a sector file with the same layout as the main file.
    pub fn attach_sectors(&mut self, path: &Path) -> Result<()> {
        let other = ingest_csv(path)?;
        if other.dates != self.dates {
            return Err(Error::Format {
                path: path.into(),
                line: 1,
                message: "sector file dates differ from the asset file".into(),
            });
        }
        self.sectors = Some(other.assets);
        Ok(())
    }
}

fn write_block<W: Write>(
    out: W,
    path: &Path,
    dates: &[NaiveDate],
    bench_name: &str,
    bench: &[f64],
    block: &SeriesBlock,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format { path: path.into(), line: 0, message: e.to_string() };
    let mut header = vec!["date".to_string(), bench_name.to_string()];
    header.extend(block.names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (t, d) in dates.iter().enumerate() {
        let mut row = vec![d.format(DATE_FORMAT).to_string(), bench[t].to_string()];
        row.extend(block.prices.iter().map(|s| s[t].map(|p| p.to_string()).unwrap_or_default()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `date,<benchmark>,<ticker>...` with ISO dates and decimal prices.
/// Empty asset cells are kept as missing; the benchmark must be complete.
pub fn ingest_csv(path: &Path) -> Result<PricePanel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, path)
}

pub fn parse_csv<R: Read>(input: R, path: &Path) -> Result<PricePanel> {
    let fmt = |line: usize, message: String| Error::Format { path: path.into(), line, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| fmt(1, e.to_string()))?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(fmt(1, "header must start with `date,<benchmark>`".into()));
    }
    let benchmark_name = header[1].to_string();
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut benchmark = Vec::new();
    let mut prices: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];

    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| fmt(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(fmt(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT)
            .map_err(|e| fmt(line, format!("bad date `{}`: {e}", &rec[0])))?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(fmt(line, format!("date {date} does not follow {prev}")));
            }
        }
        dates.push(date);
        let parse = |cell: &str, col: &str| -> Result<Option<f64>> {
            if cell.is_empty() {
                return Ok(None);
            }
            let v: f64 = cell.parse().map_err(|_| fmt(line, format!("bad price `{cell}` for {col}")))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(fmt(line, format!("non-positive price {v} for {col}")));
            }
            Ok(Some(v))
        };
        match parse(&rec[1], &benchmark_name)? {
            Some(v) => benchmark.push(v),
            None => return Err(fmt(line, format!("missing benchmark price for {benchmark_name}"))),
        }
        for (i, col) in names.iter().enumerate() {
            prices[i].push(parse(&rec[i + 2], col)?);
        }
    }
    if dates.len() < 2 {
        return Err(fmt(1, "need at least two price rows".into()));
    }
    Ok(PricePanel {
        dates,
        benchmark_name,
        benchmark,
        assets: SeriesBlock { names, prices },
        sectors: None,
    })
}

/// Simulated universe description accepted by the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    #[serde(flatten)]
    pub universe: UniverseSpec,
    pub n_steps: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_step_days")]
    pub step_days: i64,
    #[serde(default = "default_bench_name")]
    pub benchmark_name: String,
    #[serde(default)]
    pub tickers: Vec<String>,
}

fn default_dt() -> f64 {
    1.0
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2005, 1, 7).expect("valid date")
}

fn default_step_days() -> i64 {
    7
}

fn default_bench_name() -> String {
    "BENCH".into()
}

impl SimulationSpec {
    pub fn simulate(&self) -> Result<PricePanel> {
        let sim = correlated_universe(&self.universe, self.n_steps, self.dt, self.seed)?;
        from_simulation(&sim, self.start_date, self.step_days, &self.benchmark_name, &self.tickers)
    }
}

/// Dated panel from simulated paths; tickers default to A000, A001, ...
pub fn from_simulation(
    sim: &SimulatedPanel,
    start: NaiveDate,
    step_days: i64,
    benchmark_name: &str,
    tickers: &[String],
) -> Result<PricePanel> {
    if step_days < 1 {
        return Err(Error::Input("date step must be at least one day".into()));
    }
    let n = sim.assets.len();
    if !tickers.is_empty() && tickers.len() != n {
        return Err(Error::Dimension { expected: n, actual: tickers.len() });
    }
    let names = if tickers.is_empty() {
        (0..n).map(|i| format!("A{i:03}")).collect()
    } else {
        tickers.to_vec()
    };
    let dates = (0..sim.benchmark.len())
        .map(|k| start + Duration::days(step_days * k as i64))
        .collect();
    let panel = PricePanel {
        dates,
        benchmark_name: benchmark_name.to_string(),
        benchmark: sim.benchmark.clone(),
        assets: SeriesBlock {
            names,
            prices: sim.assets.iter().map(|s| s.iter().copied().map(Some).collect()).collect(),
        },
        sectors: None,
    };
    panel.validate()?;
    Ok(panel)
}
