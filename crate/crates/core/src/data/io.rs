use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RawSequence;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    /// One row per landmark: `subject,[sequence,]frame,joint,x,y[,z][,target][,label]`.
    Csv,
    /// An array of sequence objects with nested `frames`.
    Json,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "csv" => Ok(FileFormat::Csv),
            Some(e) if e == "json" => Ok(FileFormat::Json),
            _ => Err(Error::Format(format!("cannot infer format of {}", path.display()))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonSequence {
    subject_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    sequence_id: String,
    frames: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    target: Option<f64>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
}

pub fn load_sequences(path: &Path, format: FileFormat) -> Result<Vec<RawSequence>> {
    let file = BufReader::new(File::open(path)?);
    match format {
        FileFormat::Json => {
            let records: Vec<JsonSequence> = serde_json::from_reader(file)?;
            records.into_iter().map(from_json).collect()
        }
        FileFormat::Csv => read_csv(file),
    }
}

pub fn save_sequences(path: &Path, format: FileFormat, sequences: &[RawSequence]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        FileFormat::Json => {
            let records: Vec<JsonSequence> = sequences.iter().map(to_json).collect();
            serde_json::to_writer(&mut out, &records)?;
            out.write_all(b"\n")?;
        }
        FileFormat::Csv => write_csv(&mut out, sequences)?,
    }
    out.flush()?;
    Ok(())
}

fn from_json(r: JsonSequence) -> Result<RawSequence> {
    let ragged = |frame: usize, detail: String| Error::RaggedData {
        subject: r.subject_id.clone(),
        frame,
        detail,
    };
    let first = r.frames.first().ok_or_else(|| ragged(0, "no frames".into()))?;
    let k = first.len();
    let m = first.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(r.frames.len() * k * m);
    for (t, frame) in r.frames.iter().enumerate() {
        if frame.len() != k {
            return Err(ragged(t, format!("{} joints, expected {k}", frame.len())));
        }
        for joint in frame {
            if joint.len() != m {
                return Err(ragged(t, format!("joint with {} coordinates, expected {m}", joint.len())));
            }
            data.extend_from_slice(joint);
        }
    }
    let seq = RawSequence {
        subject_id: r.subject_id,
        sequence_id: r.sequence_id,
        k,
        m,
        data,
        target: r.target,
        label: r.label,
        meta: r.meta,
    };
    seq.validate()?;
    Ok(seq)
}

fn to_json(s: &RawSequence) -> JsonSequence {
    JsonSequence {
        subject_id: s.subject_id.clone(),
        sequence_id: s.sequence_id.clone(),
        frames: (0..s.len())
            .map(|t| s.frame(t).chunks(s.m).map(<[f64]>::to_vec).collect())
            .collect(),
        target: s.target,
        label: s.label.clone(),
        meta: s.meta.clone(),
    }
}

fn write_csv(out: &mut impl Write, sequences: &[RawSequence]) -> Result<()> {
    let m = sequences.first().map_or(3, |s| s.m);
    if sequences.iter().any(|s| s.m != m) {
        return Err(Error::Format("CSV output needs one ambient dimension for all sequences".into()));
    }
    let with_sequence = sequences.iter().any(|s| !s.sequence_id.is_empty());
    let with_target = sequences.iter().any(|s| s.target.is_some());
    let with_label = sequences.iter().any(|s| s.label.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject"];
    if with_sequence {
        header.push("sequence");
    }
    header.extend(["frame", "joint", "x", "y"]);
    if m == 3 {
        header.push("z");
    }
    if with_target {
        header.push("target");
    }
    if with_label {
        header.push("label");
    }
    w.write_record(&header).map_err(csv_err)?;
    for s in sequences {
        let target = s.target.map(|t| t.to_string()).unwrap_or_default();
        let label = s.label.clone().unwrap_or_default();
        for t in 0..s.len() {
            for (j, joint) in s.frame(t).chunks(m).enumerate() {
                let mut row = vec![s.subject_id.clone()];
                if with_sequence {
                    row.push(s.sequence_id.clone());
                }
                row.push(t.to_string());
                row.push(j.to_string());
                // `Display` for f64 is the shortest string that parses back exactly.
                row.extend(joint.iter().map(|x| x.to_string()));
                if with_target {
                    row.push(target.clone());
                }
                if with_label {
                    row.push(label.clone());
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

struct Columns {
    subject: usize,
    sequence: Option<usize>,
    frame: usize,
    joint: usize,
    coords: Vec<usize>,
    target: Option<usize>,
    label: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| Error::Format(format!("missing column `{name}`")));
        let known = ["subject", "sequence", "frame", "joint", "x", "y", "z", "target", "label"];
        if let Some(bad) = header.iter().find(|h| !known.contains(&h.trim())) {
            return Err(Error::Format(format!("unknown column `{bad}`")));
        }
        let mut coords = vec![need("x")?, need("y")?];
        if let Some(z) = find("z") {
            coords.push(z);
        }
        Ok(Columns {
            subject: need("subject")?,
            sequence: find("sequence"),
            frame: need("frame")?,
            joint: need("joint")?,
            coords,
            target: find("target"),
            label: find("label"),
        })
    }
}

#[derive(Default)]
struct Partial {
    subject: String,
    sequence: String,
    cells: HashMap<(usize, usize), Vec<f64>>,
    max_frame: usize,
    max_joint: usize,
    target: Option<f64>,
    label: Option<String>,
}

fn read_csv(input: impl std::io::Read) -> Result<Vec<RawSequence>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let cols = Columns::from_header(reader.headers().map_err(csv_err)?)?;
    let m = cols.coords.len();
    let mut order: Vec<(String, String)> = Vec::new();
    let mut partials: HashMap<(String, String), Partial> = HashMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = line + 2;
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_idx = |i: usize, what: &str| -> Result<usize> {
            field(i)
                .parse()
                .map_err(|_| Error::Format(format!("line {row}: bad {what} `{}`", field(i))))
        };
        let subject = field(cols.subject).to_string();
        if subject.is_empty() {
            return Err(Error::Format(format!("line {row}: empty subject")));
        }
        let sequence = cols.sequence.map(|i| field(i).to_string()).unwrap_or_default();
        let frame = parse_idx(cols.frame, "frame")?;
        let joint = parse_idx(cols.joint, "joint")?;
        let coords = cols
            .coords
            .iter()
            .map(|&i| {
                let v: f64 = field(i)
                    .parse()
                    .map_err(|_| Error::Format(format!("line {row}: bad coordinate `{}`", field(i))))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::RaggedData {
                        subject: subject.clone(),
                        frame,
                        detail: format!("non-finite coordinate for joint {joint}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let target = match cols.target.map(field) {
            Some(s) if !s.is_empty() => Some(
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {row}: bad target `{s}`")))?,
            ),
            _ => None,
        };
        let label = cols.label.map(field).filter(|s| !s.is_empty()).map(str::to_string);

        let key = (subject.clone(), sequence.clone());
        let p = partials.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Partial {
                subject: subject.clone(),
                sequence: sequence.clone(),
                target,
                label: label.clone(),
                ..Partial::default()
            }
        });
        if p.target != target || p.label != label {
            return Err(Error::Format(format!(
                "line {row}: target/label differ within sequence of subject {subject}"
            )));
        }
        if p.cells.insert((frame, joint), coords).is_some() {
            return Err(Error::DuplicateRow { subject, frame, joint });
        }
        p.max_frame = p.max_frame.max(frame);
        p.max_joint = p.max_joint.max(joint);
    }
    order
        .into_iter()
        .map(|key| {
            let p = partials.remove(&key).expect("recorded key");
            let (t, k) = (p.max_frame + 1, p.max_joint + 1);
            let mut data = Vec::with_capacity(t * k * m);
            for f in 0..t {
                for j in 0..k {
                    let c = p.cells.get(&(f, j)).ok_or_else(|| Error::RaggedData {
                        subject: p.subject.clone(),
                        frame: f,
                        detail: format!("missing joint {j}"),
                    })?;
                    data.extend_from_slice(c);
                }
            }
            let seq = RawSequence {
                subject_id: p.subject,
                sequence_id: p.sequence,
                k,
                m,
                data,
                target: p.target,
                label: p.label,
                meta: BTreeMap::new(),
            };
            seq.validate()?;
            Ok(seq)
        })
        .collect()
}
