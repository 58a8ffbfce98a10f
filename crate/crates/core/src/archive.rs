//! CVT archives of depth `D` with their addition rules and in-cell selectors.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{format_float, format_vector, parse_float, parse_vector};
use crate::model::{Genotype, SolutionRecord};
use crate::tessellation::Centroids;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdditionRule {
    /// One elite per cell, replaced only by strictly fitter records.
    ElitistFlat,
    /// Fill up to `D`, then overwrite a uniformly random occupant.
    DeepReplaceRandom,
    /// Fill up to `D` keeping cells sorted, then replace the worst iff strictly fitter.
    DeepElitist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InCellSelector {
    Best,
    /// Fitness-proportional over min-shifted fitness.
    Roulette,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AddOutcome {
    Added,
    Replaced(SolutionRecord),
    Rejected,
}

impl AddOutcome {
    pub fn is_accepted(&self) -> bool {
        !matches!(self, AddOutcome::Rejected)
    }
}

/// Floor added to every roulette weight, relative to the cell's fitness span.
pub const ROULETTE_FLOOR: f64 = 1e-3;
const ROULETTE_SPAN_GUARD: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Archive {
    centroids: Arc<Centroids>,
    depth: usize,
    rule: AdditionRule,
    selector: InCellSelector,
    cells: Vec<Vec<SolutionRecord>>,
}

impl Archive {
    pub fn new(
        centroids: Arc<Centroids>,
        depth: usize,
        rule: AdditionRule,
        selector: InCellSelector,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::config("archive depth must be positive"));
        }
        if rule == AdditionRule::ElitistFlat && depth != 1 {
            return Err(Error::config(format!(
                "elitist-flat archives have depth 1, got {depth}"
            )));
        }
        let cells = vec![Vec::new(); centroids.len()];
        Ok(Self {
            centroids,
            depth,
            rule,
            selector,
            cells,
        })
    }

    /// The single-elite MAP-Elites grid.
    pub fn flat(centroids: Arc<Centroids>) -> Self {
        Self::new(centroids, 1, AdditionRule::ElitistFlat, InCellSelector::Best)
            .expect("depth 1 is valid")
    }

    /// An empty archive with the same shape and rules.
    pub fn empty_like(&self) -> Self {
        Self {
            centroids: Arc::clone(&self.centroids),
            depth: self.depth,
            rule: self.rule,
            selector: self.selector,
            cells: vec![Vec::new(); self.cells.len()],
        }
    }

    pub fn centroids(&self) -> &Arc<Centroids> {
        &self.centroids
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn rule(&self) -> AdditionRule {
        self.rule
    }

    pub fn selector(&self) -> InCellSelector {
        self.selector
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, index: usize) -> &[SolutionRecord] {
        &self.cells[index]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[SolutionRecord]> + '_ {
        self.cells.iter().map(Vec::as_slice)
    }

    pub fn occupied_cells(&self) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| !self.cells[i].is_empty()).collect()
    }

    pub fn num_occupied(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_empty()).count()
    }

    /// Total stored records across all depth slots.
    pub fn len(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(Vec::is_empty)
    }

    /// Every record, cell by cell and slot by slot.
    pub fn records(&self) -> impl Iterator<Item = &SolutionRecord> + '_ {
        self.cells.iter().flatten()
    }

    pub fn cell_of(&self, descriptor: &[f64]) -> Result<usize> {
        self.centroids.nearest(descriptor)
    }

    pub fn best_of_cell(&self, index: usize) -> Option<&SolutionRecord> {
        best_index(&self.cells[index]).map(|i| &self.cells[index][i])
    }

    /// Insert `record` under the archive's addition rule. `rng` is only
    /// consumed by deep-replace-random when the target cell is full.
    pub fn try_add<R: Rng + ?Sized>(&mut self, record: SolutionRecord, rng: &mut R) -> Result<AddOutcome> {
        let index = self.cell_of(&record.mean_descriptor)?;
        let depth = self.depth;
        let cell = &mut self.cells[index];
        let outcome = match self.rule {
            AdditionRule::ElitistFlat => match cell.first() {
                None => {
                    cell.push(record);
                    AddOutcome::Added
                }
                Some(incumbent) if record.mean_fitness > incumbent.mean_fitness => {
                    AddOutcome::Replaced(std::mem::replace(&mut cell[0], record))
                }
                Some(_) => AddOutcome::Rejected,
            },
            AdditionRule::DeepReplaceRandom => {
                if cell.len() < depth {
                    cell.push(record);
                    AddOutcome::Added
                } else {
                    let slot = rng.random_range(0..cell.len());
                    AddOutcome::Replaced(std::mem::replace(&mut cell[slot], record))
                }
            }
            AdditionRule::DeepElitist => {
                if cell.len() < depth {
                    insert_sorted(cell, record);
                    AddOutcome::Added
                } else {
                    let worst = cell.last().map(|r| r.mean_fitness).unwrap_or(f64::NEG_INFINITY);
                    if record.mean_fitness > worst {
                        let victim = cell.pop().expect("full cell is nonempty");
                        insert_sorted(cell, record);
                        AddOutcome::Replaced(victim)
                    } else {
                        AddOutcome::Rejected
                    }
                }
            }
        };
        Ok(outcome)
    }

    /// Pick a record of an occupied cell with the archive's in-cell selector.
    pub fn select_in_cell<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> Result<&SolutionRecord> {
        in_cell_select(&self.cells[index], self.selector, rng)
    }

    /// Sum over occupied cells of `best mean_fitness + offset`.
    pub fn qd_score(&self, offset: f64) -> f64 {
        (0..self.cells.len())
            .filter_map(|i| self.best_of_cell(i))
            .map(|r| r.mean_fitness + offset)
            .sum()
    }

    pub fn coverage(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.num_occupied() as f64 / self.cells.len() as f64
    }

    pub fn max_fitness(&self) -> Result<f64> {
        self.records()
            .map(|r| r.mean_fitness)
            .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.max(f))))
            .ok_or(Error::EmptyArchive)
    }

    /// Remove and return every record in cell/slot order, leaving all cells empty.
    pub fn drain(&mut self) -> Vec<SolutionRecord> {
        self.cells.iter_mut().flat_map(std::mem::take).collect()
    }

    /// One row per (cell, slot): `cell,slot,eval_count,mean_fitness,mean_descriptor,genotype`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell", "slot", "eval_count", "mean_fitness", "mean_descriptor", "genotype"])?;
        for (c, cell) in self.cells.iter().enumerate() {
            for (s, r) in cell.iter().enumerate() {
                w.write_record([
                    c.to_string(),
                    s.to_string(),
                    r.eval_count.to_string(),
                    format_float(r.mean_fitness),
                    format_vector(&r.mean_descriptor),
                    format_vector(r.genotype.genes()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Restore records written by [`Archive::write_csv`] into an empty archive of the given shape.
    /// Records are placed verbatim in their recorded cell and slot order.
    pub fn read_csv_into<R: Read>(mut self, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("missing column {i}")));
            let cell: usize = field(0)?.parse().map_err(|e| Error::Parse(format!("cell: {e}")))?;
            let eval_count: u32 = field(2)?.parse().map_err(|e| Error::Parse(format!("eval_count: {e}")))?;
            let record = SolutionRecord {
                genotype: Genotype::new(parse_vector(field(5)?)?),
                eval_count,
                mean_fitness: parse_float(field(3)?)?,
                mean_descriptor: parse_vector(field(4)?)?,
            };
            Error::check_dim("archived descriptor", self.centroids.dim(), record.mean_descriptor.len())?;
            let slots = self
                .cells
                .get_mut(cell)
                .ok_or_else(|| Error::Parse(format!("cell {cell} out of range")))?;
            if slots.len() >= self.depth {
                return Err(Error::Parse(format!("cell {cell} exceeds depth {}", self.depth)));
            }
            slots.push(record);
        }
        Ok(self)
    }
}

fn insert_sorted(cell: &mut Vec<SolutionRecord>, record: SolutionRecord) {
    let at = cell.partition_point(|r| r.mean_fitness >= record.mean_fitness);
    cell.insert(at, record);
}

fn best_index(cell: &[SolutionRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in cell.iter().enumerate() {
        if best.is_none_or(|b| r.mean_fitness > cell[b].mean_fitness) {
            best = Some(i);
        }
    }
    best
}

/// Roulette weight of each record: `(f - min) + ε (max - min + δ)`.
pub fn roulette_weights(cell: &[SolutionRecord]) -> Vec<f64> {
    let (lo, hi) = cell.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.mean_fitness), hi.max(r.mean_fitness))
    });
    let floor = ROULETTE_FLOOR * (hi - lo + ROULETTE_SPAN_GUARD);
    cell.iter().map(|r| (r.mean_fitness - lo) + floor).collect()
}

pub fn in_cell_select<'a, R: Rng + ?Sized>(
    cell: &'a [SolutionRecord],
    selector: InCellSelector,
    rng: &mut R,
) -> Result<&'a SolutionRecord> {
    if cell.is_empty() {
        return Err(Error::EmptyInput("in-cell selection on an empty cell"));
    }
    let index = match selector {
        InCellSelector::Best => best_index(cell).expect("nonempty"),
        InCellSelector::Roulette => {
            if cell.len() == 1 {
                0
            } else {
                let weights = roulette_weights(cell);
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = cell.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            }
        }
    };
    Ok(&cell[index])
}
