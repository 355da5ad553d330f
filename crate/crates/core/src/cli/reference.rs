//! Published figures bundled as comparison columns.

use std::fmt;
use std::str::FromStr;

const DATA: &str = include_str!("../../data/reference.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefTable {
    /// XNOR gate sweep: power, delay, output levels.
    Table1,
    /// XNOR/XOR cell sweep: power and output levels.
    Table2,
    /// Full adder at 3.3 V: power, sum and carry delays and levels.
    Table3,
}

impl RefTable {
    pub fn key(self) -> &'static str {
        match self {
            RefTable::Table1 => "table1",
            RefTable::Table2 => "table2",
            RefTable::Table3 => "table3",
        }
    }
}

impl fmt::Display for RefTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for RefTable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table1" => Ok(RefTable::Table1),
            "table2" => Ok(RefTable::Table2),
            "table3" => Ok(RefTable::Table3),
            other => Err(format!("unknown reference `{other}` (expected table1, table2 or table3)")),
        }
    }
}

/// One published value, kept as the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefEntry {
    pub table: String,
    pub vdd: String,
    /// Output node for per-output quantities, empty otherwise.
    pub output: String,
    pub quantity: String,
    pub value: String,
}

impl RefEntry {
    /// Comparison column name, e.g. `ref_power_uW` or `ref_sum_delay_ps`.
    pub fn column(&self) -> String {
        if self.output.is_empty() {
            format!("ref_{}", self.quantity)
        } else {
            format!("ref_{}_{}", self.output, self.quantity)
        }
    }
}

pub fn entries() -> Vec<RefEntry> {
    DATA.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            RefEntry {
                table: f[0].into(),
                vdd: f[1].into(),
                output: f[2].into(),
                quantity: f[3].into(),
                value: f[4].trim().into(),
            }
        })
        .collect()
}

/// Column names of a table in file order, and a lookup by vdd.
pub struct Reference {
    pub columns: Vec<String>,
    entries: Vec<RefEntry>,
}

impl Reference {
    pub fn load(table: RefTable) -> Self {
        let entries: Vec<RefEntry> = entries().into_iter().filter(|e| e.table == table.key()).collect();
        let mut columns: Vec<String> = Vec::new();
        for e in &entries {
            let c = e.column();
            if !columns.contains(&c) {
                columns.push(c);
            }
        }
        Reference { columns, entries }
    }

    /// Published text for `column` at `vdd`, if the table has that row.
    pub fn value(&self, column: &str, vdd: f64) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.column() == column && e.vdd.parse::<f64>().is_ok_and(|v| (v - vdd).abs() < 1e-9))
            .map(|e| e.value.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_per_table() {
        assert_eq!(
            Reference::load(RefTable::Table1).columns,
            ["ref_power_uW", "ref_delay_ps", "ref_min_high_V", "ref_max_low_V"]
        );
        assert_eq!(Reference::load(RefTable::Table2).columns.len(), 3);
        assert_eq!(Reference::load(RefTable::Table3).columns.len(), 7);
    }

    #[test]
    fn lookup() {
        let t1 = Reference::load(RefTable::Table1);
        assert_eq!(t1.value("ref_power_uW", 3.3), Some("500.727"));
        assert_eq!(t1.value("ref_power_uW", 2.5), None);
    }
}
