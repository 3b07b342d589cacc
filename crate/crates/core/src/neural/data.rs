use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Training pairs `(x_n, z_n)` sharing one data step `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    inputs: Array2<T>,
    targets: Array2<T>,
    step: T,
    system: String,
    seed: u64,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        inputs: Array2<T>,
        targets: Array2<T>,
        step: T,
        system: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if inputs.dim() != targets.dim() {
            return Err(Error::invalid("inputs and targets differ in shape"));
        }
        if !(step > T::zero()) || !Float::is_finite(step) {
            return Err(Error::invalid("data step must be positive and finite"));
        }
        if inputs
            .iter()
            .chain(targets.iter())
            .any(|v| !Float::is_finite(*v))
        {
            return Err(Error::invalid("dataset holds non-finite values"));
        }
        Ok(Dataset {
            inputs,
            targets,
            step,
            system: system.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> ArrayView2<'_, T> {
        self.inputs.view()
    }

    pub fn targets(&self) -> ArrayView2<'_, T> {
        self.targets.view()
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        let c = |a: &Array2<T>| a.mapv(|v| U::lit(v.to_f64_lossy()));
        Dataset {
            inputs: c(&self.inputs),
            targets: c(&self.targets),
            step: U::lit(self.step.to_f64_lossy()),
            system: self.system.clone(),
            seed: self.seed,
        }
    }

    /// Writes `x_1..x_D,z_1..z_D,T` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let d = self.dim();
        let header: Vec<String> = (1..=d)
            .map(|i| format!("x_{i}"))
            .chain((1..=d).map(|i| format!("z_{i}")))
            .chain(std::iter::once("T".to_string()))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for (x, z) in self.inputs.rows().into_iter().zip(self.targets.rows()) {
            let rec: Vec<String> = x
                .iter()
                .chain(z.iter())
                .chain(std::iter::once(&self.step))
                .map(|v| format!("{:e}", v.to_f64_lossy()))
                .collect();
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, system: &str, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        let cols = header.len();
        if cols < 3 || cols % 2 == 0 || &header[cols - 1] != "T" {
            return Err(Error::invalid(
                "dataset header must read x_1..x_D,z_1..z_D,T",
            ));
        }
        let d = (cols - 1) / 2;
        for i in 0..d {
            if header[i] != format!("x_{}", i + 1) || header[d + i] != format!("z_{}", i + 1) {
                return Err(Error::invalid(
                    "dataset header must read x_1..x_D,z_1..z_D,T",
                ));
            }
        }
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        let mut step = None;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("bad number in dataset: {e}")))?;
            xs.extend(vals[..d].iter().map(|v| T::lit(*v)));
            zs.extend(vals[d..2 * d].iter().map(|v| T::lit(*v)));
            match step {
                None => step = Some(vals[2 * d]),
                Some(s) if s != vals[2 * d] => {
                    return Err(Error::invalid("dataset rows disagree on T"))
                }
                _ => {}
            }
        }
        let n = xs.len() / d;
        let step = step.ok_or_else(|| Error::invalid("dataset has no rows"))?;
        Dataset::new(
            Array2::from_shape_vec((n, d), xs).expect("shape"),
            Array2::from_shape_vec((n, d), zs).expect("shape"),
            T::lit(step),
            system,
            seed,
        )
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}
