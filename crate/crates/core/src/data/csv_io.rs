//! CSV ingestion and export for telemetry records.
//!
//! Files carry a header row; columns default to the record field names but
//! can be remapped. Rows with unparseable cells are skipped and counted
//! rather than aborting the load; empty numeric cells become NaN so the
//! cleaning stage decides their fate.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Record, SystemStatus, INPUT_NAMES, TARGET_NAME};

/// Maps record fields to CSV column names. Defaults to the field names.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    /// field name -> column name
    overrides: HashMap<String, String>,
}

impl ColumnMap {
    pub fn with_override(mut self, field: &str, column: &str) -> Self {
        self.overrides.insert(field.to_string(), column.to_string());
        self
    }

    fn column_for<'a>(&'a self, field: &'a str) -> &'a str {
        self.overrides
            .get(field)
            .map(String::as_str)
            .unwrap_or(field)
    }
}

/// Outcome of a CSV load: parsed records plus how many rows were skipped.
#[derive(Debug)]
pub struct LoadReport {
    pub records: Vec<Record>,
    pub skipped_rows: usize,
}

const STATUS_FIELD: &str = "system_status";

/// Loads records from a CSV file with a header row.
pub fn load_csv(path: &Path, map: &ColumnMap) -> Result<LoadReport> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot read data file {path:?}: {e}")))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let index_of = |field: &str| -> Result<usize> {
        let column = map.column_for(field);
        headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::data(format!("missing mapped column '{column}' in {path:?}")))
    };

    let mut field_ix = [0usize; 6];
    for (slot, field) in INPUT_NAMES.iter().chain([&TARGET_NAME]).enumerate() {
        field_ix[slot] = index_of(field)?;
    }
    let status_ix = index_of(STATUS_FIELD)?;

    let mut records = Vec::new();
    let mut skipped_rows = 0usize;
    for row in reader.records() {
        let row = row?;
        match parse_row(&row, &field_ix, status_ix) {
            Some(record) => records.push(record),
            None => skipped_rows += 1,
        }
    }
    Ok(LoadReport {
        records,
        skipped_rows,
    })
}

fn parse_row(row: &csv::StringRecord, field_ix: &[usize; 6], status_ix: usize) -> Option<Record> {
    let mut values = [0.0f64; 6];
    for (slot, &ix) in field_ix.iter().enumerate() {
        let cell = row.get(ix)?.trim();
        values[slot] = if cell.is_empty() {
            f64::NAN // missing; dropped later by clean()
        } else {
            cell.parse::<f64>().ok()?
        };
    }
    let status = match row.get(status_ix)?.trim().to_ascii_lowercase().as_str() {
        "on" => SystemStatus::On,
        "off" | "" => SystemStatus::Off,
        _ => return None,
    };
    Some(Record {
        speed_through_water: values[0],
        relative_wind_speed: values[1],
        relative_wind_direction: values[2],
        draught: values[3],
        trim: values[4],
        shaft_power: values[5],
        system_status: status,
    })
}

/// Writes records to CSV with the canonical header.
pub fn write_csv(path: &Path, records: &[Record]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = INPUT_NAMES.to_vec();
    header.push(TARGET_NAME);
    header.push(STATUS_FIELD);
    writer.write_record(&header)?;
    for r in records {
        writer.write_record(&[
            r.speed_through_water.to_string(),
            r.relative_wind_speed.to_string(),
            r.relative_wind_direction.to_string(),
            r.draught.to_string(),
            r.trim.to_string(),
            r.shaft_power.to_string(),
            r.system_status.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
