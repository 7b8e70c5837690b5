//! Reader and writer for the ARPA backoff language model text format.
//!
//! The format is line oriented: a `\data\` header declaring per-order n-gram
//! counts, one `\n-grams:` section per order with `log10prob  words...
//! [log10bow]` records, and a closing `\end\`. Probabilities are log10 in the
//! file and natural log in memory. Output records are sorted by word strings
//! and printed with seven decimal places so that a save/load round trip never
//! moves a value by more than 5e-8 in log10.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{
    BackoffModel, ModelBuilder, NgramEntry, PLACEHOLDER_THRESHOLD_LOG10,
};
use crate::vocab::Vocabulary;

const LN_10: f64 = std::f64::consts::LN_10;

/// One parsed record: log10 probability, the word strings, optional log10
/// backoff weight, and the line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ArpaRecord {
    pub log10_prob: f64,
    pub words: Vec<String>,
    pub log10_bow: Option<f64>,
    pub line: usize,
}

/// A structurally checked ARPA document: declared counts match section sizes
/// and orders are contiguous from 1.
#[derive(Debug, Clone, Default)]
pub struct ArpaDocument {
    pub declared_counts: Vec<usize>,
    pub sections: Vec<Vec<ArpaRecord>>,
}

impl ArpaDocument {
    pub fn order(&self) -> usize {
        self.declared_counts.len()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_number(token: &str, line: usize, what: &str) -> Result<f64> {
    let value: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("non-numeric {what} \"{token}\"")))?;
    if !value.is_finite() {
        return Err(parse_err(line, format!("non-finite {what} \"{token}\"")));
    }
    Ok(value)
}

/// Parses an ARPA document, line at a time. Structural defects (count
/// mismatches, out-of-order sections, malformed records) are reported with
/// their line number.
pub fn read_arpa_document(reader: impl BufRead) -> Result<ArpaDocument> {
    #[derive(PartialEq)]
    enum State {
        Preamble,
        Header,
        Section(usize),
    }

    let mut state = State::Preamble;
    let mut doc = ArpaDocument::default();
    let mut line_no = 0usize;
    let mut finished = false;

    for raw in reader.lines() {
        line_no += 1;
        let raw = raw?;
        let line = raw.trim_end_matches('\r');
        let trimmed = line.trim();

        match state {
            State::Preamble => {
                if trimmed == "\\data\\" {
                    state = State::Header;
                }
            }
            State::Header => {
                if trimmed.is_empty() {
                    continue;
                }
                if let Some(rest) = trimmed.strip_prefix("ngram ") {
                    let (order_str, count_str) = rest.split_once('=').ok_or_else(|| {
                        parse_err(line_no, format!("malformed count line \"{trimmed}\""))
                    })?;
                    let order: usize = order_str.trim().parse().map_err(|_| {
                        parse_err(line_no, format!("non-numeric order \"{order_str}\""))
                    })?;
                    let count: usize = count_str.trim().parse().map_err(|_| {
                        parse_err(line_no, format!("non-numeric count \"{count_str}\""))
                    })?;
                    if order != doc.declared_counts.len() + 1 {
                        return Err(parse_err(
                            line_no,
                            format!(
                                "expected count for order {}, found order {order}",
                                doc.declared_counts.len() + 1
                            ),
                        ));
                    }
                    doc.declared_counts.push(count);
                    doc.sections.push(Vec::new());
                } else if let Some(order) = section_header(trimmed) {
                    if doc.declared_counts.is_empty() {
                        return Err(parse_err(line_no, "section before any ngram counts"));
                    }
                    enter_section(&doc, None, order, line_no)?;
                    state = State::Section(order);
                } else {
                    return Err(parse_err(
                        line_no,
                        format!("unexpected line in header: \"{trimmed}\""),
                    ));
                }
            }
            State::Section(current) => {
                if trimmed.is_empty() {
                    continue;
                }
                if trimmed == "\\end\\" {
                    check_section_complete(&doc, current, line_no)?;
                    ensure_remaining_empty(&doc, current, line_no)?;
                    finished = true;
                    break;
                }
                if let Some(order) = section_header(trimmed) {
                    check_section_complete(&doc, current, line_no)?;
                    enter_section(&doc, Some(current), order, line_no)?;
                    state = State::Section(order);
                    continue;
                }
                let record = parse_record(trimmed, current, line_no)?;
                doc.sections[current - 1].push(record);
            }
        }
    }

    match state {
        State::Preamble => Err(parse_err(line_no, "no \\data\\ header found")),
        _ if !finished => Err(parse_err(line_no, "missing \\end\\")),
        _ => Ok(doc),
    }
}

fn section_header(line: &str) -> Option<usize> {
    let rest = line.strip_prefix('\\')?.strip_suffix("-grams:")?;
    rest.parse().ok()
}

fn enter_section(
    doc: &ArpaDocument,
    previous: Option<usize>,
    order: usize,
    line_no: usize,
) -> Result<()> {
    if order > doc.declared_counts.len() {
        return Err(parse_err(
            line_no,
            format!(
                "section for order {order} but only {} orders declared",
                doc.declared_counts.len()
            ),
        ));
    }
    // Sections must arrive in increasing order; sections declared with zero
    // records may be omitted.
    let mut expected = previous.map_or(1, |p| p + 1);
    while expected < order {
        if doc.declared_counts[expected - 1] != 0 {
            return Err(parse_err(
                line_no,
                format!("expected \\{expected}-grams: before \\{order}-grams:"),
            ));
        }
        expected += 1;
    }
    if expected != order {
        return Err(parse_err(
            line_no,
            format!("section for order {order} out of order"),
        ));
    }
    Ok(())
}

fn check_section_complete(doc: &ArpaDocument, order: usize, line_no: usize) -> Result<()> {
    let declared = doc.declared_counts[order - 1];
    let got = doc.sections[order - 1].len();
    if declared != got {
        return Err(parse_err(
            line_no,
            format!("declared {declared} {order}-grams but section contains {got}"),
        ));
    }
    Ok(())
}

fn ensure_remaining_empty(doc: &ArpaDocument, last: usize, line_no: usize) -> Result<()> {
    for order in last + 1..=doc.declared_counts.len() {
        if doc.declared_counts[order - 1] != 0 {
            return Err(parse_err(
                line_no,
                format!(
                    "declared {} {order}-grams but no \\{order}-grams: section",
                    doc.declared_counts[order - 1]
                ),
            ));
        }
    }
    Ok(())
}

fn parse_record(line: &str, order: usize, line_no: usize) -> Result<ArpaRecord> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < order + 1 {
        return Err(parse_err(
            line_no,
            format!(
                "record has {} fields, expected at least {} for a {order}-gram",
                tokens.len(),
                order + 1
            ),
        ));
    }
    if tokens.len() > order + 2 {
        return Err(parse_err(
            line_no,
            format!(
                "record has {} fields, expected at most {} for a {order}-gram",
                tokens.len(),
                order + 2
            ),
        ));
    }
    let log10_prob = parse_number(tokens[0], line_no, "log probability")?;
    let words = tokens[1..=order].iter().map(|w| w.to_string()).collect();
    let log10_bow = if tokens.len() == order + 2 {
        Some(parse_number(tokens[order + 1], line_no, "backoff weight")?)
    } else {
        None
    };
    Ok(ArpaRecord {
        log10_prob,
        words,
        log10_bow,
        line: line_no,
    })
}

/// Builds a model from a parsed document and validates it (at a tolerance
/// matched to the print precision).
pub fn document_to_model(doc: &ArpaDocument) -> Result<BackoffModel> {
    let model = document_to_model_unvalidated(doc)?;
    let report = model.validate_with_tolerance(1e-5);
    if !report.is_clean() {
        return Err(Error::InvalidModel(report.summary()));
    }
    Ok(model)
}

/// Builds a model from a parsed document without validating it. Word ids are
/// assigned in file order; a sentence-begin unigram at or below the
/// placeholder threshold is flagged, and the begin frequency is
/// reconstructed from the end token's unigram probability when available.
pub fn document_to_model_unvalidated(doc: &ArpaDocument) -> Result<BackoffModel> {
    let order = doc.order();
    if order == 0 {
        return Err(parse_err(0, "document declares no orders"));
    }
    let mut vocab = Vocabulary::new();
    for section in &doc.sections {
        for record in section {
            for word in &record.words {
                vocab.intern(word);
            }
        }
    }
    let begin = vocab.begin();
    let mut builder = ModelBuilder::new(order, vocab);
    for (idx, section) in doc.sections.iter().enumerate() {
        let n = idx + 1;
        for record in section {
            let ids: Vec<u32> = record
                .words
                .iter()
                .map(|w| builder.vocab().id(w).expect("interned above"))
                .collect();
            if n == order {
                if record.log10_bow.is_some() {
                    return Err(parse_err(
                        record.line,
                        "backoff weight on a top-order record",
                    ));
                }
            }
            let placeholder = n == 1
                && begin == Some(ids[0])
                && record.log10_prob <= PLACEHOLDER_THRESHOLD_LOG10;
            let mut entry = NgramEntry::with_bow(
                record.log10_prob * LN_10,
                record.log10_bow.map(|b| b * LN_10),
            );
            entry.placeholder = placeholder;
            if !builder.insert(&ids, entry) {
                return Err(parse_err(
                    record.line,
                    format!("duplicate {n}-gram \"{}\"", record.words.join(" ")),
                ));
            }
        }
    }
    let mut model = builder.build_raw();
    reconstruct_begin_frequency(&mut model);
    Ok(model)
}

fn reconstruct_begin_frequency(model: &mut BackoffModel) {
    let begin_is_placeholder = match model.vocab().begin() {
        Some(begin) => model
            .entry(&[begin])
            .map_or(false, |e| e.placeholder),
        None => return,
    };
    if !begin_is_placeholder {
        return;
    }
    // The end token is predicted exactly once per sentence, so its unigram
    // probability is the begin token's relative frequency.
    if let Some(end) = model.vocab().end() {
        if let Some(entry) = model.entry(&[end]) {
            if !entry.placeholder {
                model.set_begin_frequency(entry.log_prob.exp());
            }
        }
    }
}

/// Reads an ARPA document into a validated model.
pub fn read_arpa(reader: impl BufRead) -> Result<BackoffModel> {
    let doc = read_arpa_document(reader)?;
    document_to_model(&doc)
}

/// Formats a log10 value with seven decimal places, the precision contract
/// of this writer.
fn format_log10(value: f64) -> String {
    let v = if value == 0.0 { 0.0 } else { value };
    format!("{v:.7}")
}

/// Writes a model in ARPA form: orders 1..N, records sorted by word strings,
/// placeholder probabilities emitted as -99.
pub fn write_arpa(model: &BackoffModel, mut writer: impl Write) -> Result<()> {
    writeln!(writer, "\\data\\")?;
    for order in 1..=model.order() {
        writeln!(writer, "ngram {order}={}", model.ngram_count(order))?;
    }
    for order in 1..=model.order() {
        writeln!(writer)?;
        writeln!(writer, "\\{order}-grams:")?;
        let mut records: Vec<(Vec<&str>, &NgramEntry)> = model
            .entries(order)
            .map(|(key, entry)| {
                let words: Vec<&str> = key
                    .iter()
                    .map(|&id| model.vocab().word(id).expect("id from model tables"))
                    .collect();
                (words, entry)
            })
            .collect();
        records.sort_by(|a, b| a.0.cmp(&b.0));
        for (words, entry) in records {
            let prob = if entry.placeholder {
                "-99".to_string()
            } else {
                format_log10(entry.log_prob / LN_10)
            };
            write!(writer, "{prob}\t{}", words.join(" "))?;
            if let Some(bow) = entry.log_bow {
                write!(writer, "\t{}", format_log10(bow / LN_10))?;
            }
            writeln!(writer)?;
        }
    }
    writeln!(writer)?;
    writeln!(writer, "\\end\\")?;
    Ok(())
}

/// Convenience: render a model to an ARPA string.
pub fn to_arpa_string(model: &BackoffModel) -> String {
    let mut buf = Vec::new();
    write_arpa(model, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ARPA output is UTF-8")
}
