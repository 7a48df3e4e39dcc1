use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{Label, LabeledDataset, LabeledExample};
use crate::error::{Error, Result};

/// Parses LIBSVM text: `<label> <idx>:<val> ...` per line, `#` comments,
/// LF or CRLF line ends. The dimension is the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LabeledDataset> {
    let mut examples = Vec::new();
    let mut dimension = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line,
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label = parse_label(label_tok).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("label `{label_tok}` is not one of +1, 1, -1"),
        })?;
        let mut features = Vec::new();
        let mut prev = 0u32;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected `index:value`, found `{tok}`"),
            })?;
            let idx: u32 = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad feature index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= prev {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("feature index {idx} does not increase past {prev}"),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad feature value `{val}`"),
            })?;
            features.push((idx, val));
            prev = idx;
        }
        dimension = dimension.max(prev as usize);
        examples.push(LabeledExample { features, label });
    }
    Ok(LabeledDataset::from_parts(examples, dimension, None))
}

fn parse_label(tok: &str) -> Option<Label> {
    match tok {
        "+1" | "1" => Some(Label::Positive),
        "-1" | "\u{2212}1" => Some(Label::Negative),
        _ => None,
    }
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    parse_libsvm(std::io::BufReader::new(file))
}

/// Renders a dataset as LIBSVM text with `%+d` labels and shortest
/// round-trip values.
pub fn serialize_libsvm(dataset: &LabeledDataset) -> String {
    let mut out = String::new();
    for ex in dataset.examples() {
        out.push_str(match ex.label {
            Label::Positive => "+1",
            Label::Negative => "-1",
        });
        for &(i, v) in ex.features() {
            let _ = write!(out, " {i}:{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(serialize_libsvm(dataset).as_bytes())?;
    Ok(())
}
