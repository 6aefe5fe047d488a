//! CSV/JSON persistence for cohorts.
//!
//! Files are UTF-8, comma separated, with a header row and no quoting. A
//! missing label is an empty field. Floats are written in shortest
//! round-trip form, so `save_cohort` after `load_cohort` reproduces files
//! byte for byte.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{
    Cohort, CohortError, Edge, FeatureSchema, PatientRecord, PhysicianRecord, Result, CLAIMS_DIM,
};

pub const PATIENTS_FILE: &str = "patients.csv";
pub const PHYSICIANS_FILE: &str = "physicians.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const SCHEMA_FILE: &str = "schema.json";

const CLAIMS_COLUMNS: [&str; CLAIMS_DIM] = ["claims_max", "claims_min", "claims_sum", "claims_avg"];

fn io_err(path: &Path, source: std::io::Error) -> CohortError {
    CohortError::Io { path: path.display().to_string(), source }
}

fn patient_header(q: usize) -> Vec<String> {
    let mut h: Vec<String> = ["patient_id", "label", "gender", "age_decade", "region"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..q).map(|c| format!("ind_{c}")));
    h.extend((0..q).map(|c| format!("freq_{c}")));
    h
}

fn physician_header(with_claims: bool) -> Vec<String> {
    let mut h: Vec<String> = ["physician_id", "label", "gender", "specialty", "patient_count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if with_claims {
        h.extend(CLAIMS_COLUMNS.iter().map(|s| s.to_string()));
    }
    h
}

fn fmt_label(label: Option<bool>) -> &'static str {
    match label {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

/// Writes patients.csv, physicians.csv, edges.csv and schema.json into `dir`,
/// creating it if needed. Claims columns are written only when every
/// physician has claims features.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let path = dir.join(PATIENTS_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    let write = |w: &mut BufWriter<File>, s: &str| w.write_all(s.as_bytes());
    let mut line = String::new();
    (|| -> std::io::Result<()> {
        writeln!(w, "{}", patient_header(cohort.schema.num_codes).join(","))?;
        for p in &cohort.patients {
            line.clear();
            line.push_str(&p.id);
            line.push(',');
            line.push_str(fmt_label(p.label));
            line.push_str(if p.gender { ",1," } else { ",0," });
            line.push_str(&p.age_decade.to_string());
            line.push(',');
            line.push_str(&p.region.to_string());
            for &b in &p.code_indicators {
                line.push_str(if b { ",1" } else { ",0" });
            }
            for f in &p.code_frequencies {
                line.push(',');
                line.push_str(&f.to_string());
            }
            line.push('\n');
            write(&mut w, &line)?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(&path, e))?;

    let path = dir.join(PHYSICIANS_FILE);
    let with_claims = !cohort.physicians.is_empty() && cohort.has_claims_features();
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    (|| -> std::io::Result<()> {
        writeln!(w, "{}", physician_header(with_claims).join(","))?;
        for d in &cohort.physicians {
            write!(
                w,
                "{},{},{},{},{}",
                d.id,
                fmt_label(d.label),
                d.gender as u8,
                d.specialty,
                d.patient_count
            )?;
            if with_claims {
                let c = d.claims_features.expect("checked above");
                write!(w, ",{},{},{},{}", c[0], c[1], c[2], c[3])?;
            }
            writeln!(w)?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(&path, e))?;

    let path = dir.join(EDGES_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    (|| -> std::io::Result<()> {
        writeln!(w, "physician_id,patient_id,claim_count")?;
        for e in &cohort.edges {
            writeln!(
                w,
                "{},{},{}",
                cohort.physicians[e.physician as usize].id,
                cohort.patients[e.patient as usize].id,
                e.claim_count
            )?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(&path, e))?;

    let path = dir.join(SCHEMA_FILE);
    let mut json = serde_json::to_string_pretty(&cohort.schema).expect("schema serializes");
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    Ok(())
}

struct Table {
    file: String,
    reader: csv::Reader<File>,
    header: Vec<String>,
}

impl Table {
    fn open(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let file = File::open(&path).map_err(|e| io_err(&path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .quoting(false)
            .trim(csv::Trim::None)
            .from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| CohortError::Parse { file: name.into(), line: 1, message: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        Ok(Self { file: name.into(), reader, header })
    }

    fn expect_header(&self, expected: &[String]) -> Result<()> {
        if self.header != expected {
            return Err(self.err(1, format!("expected header {:?}, found {:?}", expected.join(","), self.header.join(","))));
        }
        Ok(())
    }

    fn err(&self, line: u64, message: String) -> CohortError {
        CohortError::Parse { file: self.file.clone(), line, message }
    }

    /// Visits each data row together with its 1-based file line number.
    fn for_each(&mut self, mut f: impl FnMut(&csv::StringRecord, u64) -> std::result::Result<(), String>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                CohortError::Parse { file: self.file.clone(), line, message: e.to_string() }
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            f(&record, line).map_err(|m| CohortError::Parse { file: self.file.clone(), line, message: m })?;
        }
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, column: &str) -> std::result::Result<T, String> {
    field.parse().map_err(|_| format!("column {column}: cannot parse {field:?}"))
}

fn parse_bit(field: &str, column: &str) -> std::result::Result<bool, String> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("column {column}: expected 0 or 1, found {field:?}")),
    }
}

fn parse_label(field: &str) -> std::result::Result<Option<bool>, String> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_bit(field, "label").map(Some)
    }
}

fn parse_id(field: &str, column: &str) -> std::result::Result<String, String> {
    if super::valid_id(field) {
        Ok(field.to_string())
    } else {
        Err(format!("column {column}: invalid id {field:?} (allowed: A-Z a-z 0-9 _ -)"))
    }
}

/// Reads and fully validates a cohort directory. schema.json is optional;
/// without it, Q is inferred from the patients header and S defaults.
pub fn load_cohort(dir: &Path) -> Result<Cohort> {
    let schema_path = dir.join(SCHEMA_FILE);
    let schema_in: Option<FeatureSchema> = if schema_path.exists() {
        let text = std::fs::read_to_string(&schema_path).map_err(|e| io_err(&schema_path, e))?;
        Some(serde_json::from_str(&text).map_err(|e| CohortError::Parse {
            file: SCHEMA_FILE.into(),
            line: e.line() as u64,
            message: e.to_string(),
        })?)
    } else {
        None
    };

    let mut t = Table::open(dir, PATIENTS_FILE)?;
    let q = match &schema_in {
        Some(s) => s.num_codes,
        None => {
            let n = t.header.len();
            if n < 5 || (n - 5) % 2 != 0 {
                return Err(t.err(1, "cannot infer code count from header".into()));
            }
            (n - 5) / 2
        }
    };
    let schema = schema_in.unwrap_or_else(|| FeatureSchema::new(q, super::DEFAULT_NUM_SPECIALTIES));
    t.expect_header(&patient_header(q))?;
    let mut patients = Vec::new();
    t.for_each(|r, _| {
        let ind = (0..q)
            .map(|c| parse_bit(&r[5 + c], "ind"))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let freq = (0..q)
            .map(|c| parse_num::<u32>(&r[5 + q + c], "freq"))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        patients.push(PatientRecord {
            id: parse_id(&r[0], "patient_id")?,
            label: parse_label(&r[1])?,
            gender: parse_bit(&r[2], "gender")?,
            age_decade: parse_num(&r[3], "age_decade")?,
            region: parse_num(&r[4], "region")?,
            code_indicators: ind,
            code_frequencies: freq,
        });
        Ok(())
    })?;

    let mut t = Table::open(dir, PHYSICIANS_FILE)?;
    let with_claims = t.header.len() == 5 + CLAIMS_DIM;
    t.expect_header(&physician_header(with_claims))?;
    let mut physicians = Vec::new();
    t.for_each(|r, _| {
        let claims_features = if with_claims && (5..5 + CLAIMS_DIM).any(|k| !r[k].is_empty()) {
            let mut c = [0.0; CLAIMS_DIM];
            for (d, v) in c.iter_mut().enumerate() {
                *v = parse_num(&r[5 + d], CLAIMS_COLUMNS[d])?;
            }
            Some(c)
        } else {
            None
        };
        physicians.push(PhysicianRecord {
            id: parse_id(&r[0], "physician_id")?,
            label: parse_label(&r[1])?,
            gender: parse_bit(&r[2], "gender")?,
            specialty: parse_num(&r[3], "specialty")?,
            patient_count: parse_num(&r[4], "patient_count")?,
            claims_features,
        });
        Ok(())
    })?;

    let patient_ix: HashMap<&str, u32> =
        patients.iter().enumerate().map(|(j, p)| (p.id.as_str(), j as u32)).collect();
    let physician_ix: HashMap<&str, u32> =
        physicians.iter().enumerate().map(|(i, d)| (d.id.as_str(), i as u32)).collect();

    let mut t = Table::open(dir, EDGES_FILE)?;
    t.expect_header(&["physician_id", "patient_id", "claim_count"].map(String::from))?;
    let mut edges = Vec::new();
    let mut dangling = None;
    t.for_each(|r, line| {
        let claim_count: u32 = parse_num(&r[2], "claim_count")?;
        match (physician_ix.get(&r[0]), patient_ix.get(&r[1])) {
            (Some(&physician), Some(&patient)) => edges.push(Edge { physician, patient, claim_count }),
            _ => {
                dangling.get_or_insert((line, r[0].to_string(), r[1].to_string()));
            }
        }
        Ok(())
    })?;
    if let Some((line, d, p)) = dangling {
        return Err(CohortError::Integrity(format!(
            "{EDGES_FILE}:{line}: edge ({d}, {p}) references an unknown physician or patient"
        )));
    }

    Cohort::new(patients, physicians, edges, schema)
}
