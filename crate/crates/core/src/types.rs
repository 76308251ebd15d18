//! Domain data model: label vectors, raw text datasets in the SemEval
//! tab-separated layout, and token-embedding datasets.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{invalid, Error, Result};

/// Binary vector of active classes for one instance. Zero active labels is legal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVector(Vec<bool>);

impl LabelVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Builds a label vector from 0/1 integers, rejecting anything else.
    pub fn from_u8(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(invalid(format!("label value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> bool {
        self.0[class]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_active(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// One raw text instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TextInstance {
    pub id: String,
    pub text: String,
    pub labels: Option<LabelVector>,
}

/// A labeled multi-label text dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub instances: Vec<TextInstance>,
    pub language_tag: Option<String>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn with_language_tag(mut self, tag: impl Into<String>) -> Self {
        self.language_tag = Some(tag.into());
        self
    }

    /// Serializes back to the tab-separated layout accepted by [`parse_semeval_tsv`].
    ///
    /// Unlabeled instances cannot be represented in that layout and are rejected.
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::from("ID\tTweet");
        for name in &self.class_names {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for inst in &self.instances {
            let labels = inst
                .labels
                .as_ref()
                .ok_or_else(|| invalid(format!("instance `{}` has no labels", inst.id)))?;
            write!(out, "{}\t{}", inst.id, inst.text).expect("write to String");
            for &b in labels.bits() {
                out.push_str(if b { "\t1" } else { "\t0" });
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Parses a SemEval-style TSV file: header `ID<TAB>Tweet<TAB><class_1>...<TAB><class_w>`
/// followed by rows of `2 + w` fields with 0/1 labels. LF and CRLF line endings are
/// both accepted; fields are never quoted.
pub fn parse_semeval_tsv(content: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(content).map_err(|e| {
        let line = content[..e.valid_up_to()]
            .iter()
            .filter(|&&c| c == b'\n')
            .count()
            + 1;
        Error::Parse {
            line,
            msg: "invalid UTF-8".into(),
        }
    })?;
    if text.is_empty() {
        return Err(Error::Empty("TSV file has no header".into()));
    }

    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
    if header.len() < 3 {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "header needs ID, Tweet and at least one class column, got {} field(s)",
                header.len()
            ),
        });
    }
    let class_names: Vec<String> = header[2..].iter().map(|s| s.to_string()).collect();
    let w = class_names.len();
    let mut seen = HashSet::new();
    for name in &class_names {
        if !seen.insert(name.as_str()) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("duplicate class name `{name}`"),
            });
        }
    }

    let rows: Vec<&str> = lines.collect();
    // A single trailing newline leaves one empty element behind.
    let rows = match rows.split_last() {
        Some((&"", rest)) => rest,
        _ => &rows[..],
    };

    let mut ids = HashSet::new();
    let mut instances = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let line = idx + 2;
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 2 + w {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", 2 + w, fields.len()),
            });
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty id".into(),
            });
        }
        if !ids.insert(id) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate id `{id}`"),
            });
        }
        let bits = fields[2..]
            .iter()
            .enumerate()
            .map(|(a, f)| match *f {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse {
                    line,
                    msg: format!(
                        "label `{}` for class `{}` is not 0 or 1",
                        other, class_names[a]
                    ),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        instances.push(TextInstance {
            id: id.to_string(),
            text: fields[1].to_string(),
            labels: Some(LabelVector(bits)),
        });
    }

    Ok(Dataset {
        class_names,
        instances,
        language_tag: None,
    })
}

pub fn read_semeval_tsv(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_semeval_tsv(&std::fs::read(path)?)
}

pub(crate) fn check_class_names(expected: &[String], found: &[String]) -> Result<()> {
    if expected == found {
        return Ok(());
    }
    let columns = (0..expected.len().max(found.len()))
        .filter(|&i| expected.get(i) != found.get(i))
        .collect();
    Err(Error::ClassMismatch {
        columns,
        left: expected.to_vec(),
        right: found.to_vec(),
    })
}

fn prefixed_id(tag: Option<&str>, id: &str) -> String {
    match tag {
        Some(tag) => format!("{tag}:{id}"),
        None => id.to_string(),
    }
}

/// Concatenates datasets sharing identical (order-sensitive) class names.
/// Ids are prefixed with `<language_tag>:` for parts that carry a tag.
pub fn merge_datasets(parts: &[Dataset]) -> Result<Dataset> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Empty("no datasets to merge".into()))?;
    let mut instances = Vec::with_capacity(parts.iter().map(Dataset::len).sum());
    let mut ids = HashSet::new();
    for part in parts {
        check_class_names(&first.class_names, &part.class_names)?;
        for inst in &part.instances {
            let id = prefixed_id(part.language_tag.as_deref(), &inst.id);
            if !ids.insert(id.clone()) {
                return Err(invalid(format!("duplicate id `{id}` after merging")));
            }
            instances.push(TextInstance { id, ..inst.clone() });
        }
    }
    Ok(Dataset {
        class_names: first.class_names.clone(),
        instances,
        language_tag: None,
    })
}

/// One instance as a sequence of token embeddings (`d_i x m`, token-major).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedInstance {
    pub id: String,
    tokens: Array2<f32>,
    pub labels: Option<LabelVector>,
}

impl EmbeddedInstance {
    pub fn new(
        id: impl Into<String>,
        tokens: Array2<f32>,
        labels: Option<LabelVector>,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(invalid("instance id is empty"));
        }
        if tokens.nrows() == 0 || tokens.ncols() == 0 {
            return Err(invalid(format!(
                "instance `{id}` has an empty token matrix"
            )));
        }
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "instance `{id}` has non-finite embedding values"
            )));
        }
        Ok(Self {
            id,
            tokens: tokens.as_standard_layout().into_owned(),
            labels,
        })
    }

    pub fn tokens(&self) -> &Array2<f32> {
        &self.tokens
    }

    /// Number of tokens `d_i`.
    pub fn seq_len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.tokens.ncols()
    }
}

/// Dataset of embedded instances sharing one embedding width and class list.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDataset {
    pub class_names: Vec<String>,
    pub embedding_dim: usize,
    pub instances: Vec<EmbeddedInstance>,
}

impl EmbeddedDataset {
    pub fn new(
        class_names: Vec<String>,
        embedding_dim: usize,
        instances: Vec<EmbeddedInstance>,
    ) -> Result<Self> {
        let w = class_names.len();
        if w == 0 {
            return Err(invalid("dataset has no classes"));
        }
        if embedding_dim == 0 {
            return Err(invalid("embedding dimension is zero"));
        }
        let unique: HashSet<_> = class_names.iter().collect();
        if unique.len() != w {
            return Err(invalid("class names are not unique"));
        }
        let mut ids = HashSet::new();
        for inst in &instances {
            if inst.embedding_dim() != embedding_dim {
                return Err(Error::Shape(format!(
                    "instance `{}` has width {}, dataset width is {}",
                    inst.id,
                    inst.embedding_dim(),
                    embedding_dim
                )));
            }
            if let Some(l) = &inst.labels {
                if l.len() != w {
                    return Err(Error::Shape(format!(
                        "instance `{}` has {} labels, dataset has {} classes",
                        inst.id,
                        l.len(),
                        w
                    )));
                }
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(invalid(format!("duplicate id `{}`", inst.id)));
            }
        }
        Ok(Self {
            class_names,
            embedding_dim,
            instances,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Gold labels as an `n x w` boolean matrix; fails if any instance is unlabeled.
    pub fn gold_matrix(&self) -> Result<Array2<bool>> {
        let w = self.num_classes();
        let mut out = Array2::from_elem((self.len(), w), false);
        for (i, inst) in self.instances.iter().enumerate() {
            let labels = inst
                .labels
                .as_ref()
                .ok_or_else(|| invalid(format!("instance `{}` has no labels", inst.id)))?;
            for (a, &b) in labels.bits().iter().enumerate() {
                out[[i, a]] = b;
            }
        }
        Ok(out)
    }

    /// Number of gold-positive instances per class.
    pub fn positive_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for labels in self.instances.iter().filter_map(|i| i.labels.as_ref()) {
            for (a, &b) in labels.bits().iter().enumerate() {
                counts[a] += b as usize;
            }
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            class_names: self.class_names.clone(),
            embedding_dim: self.embedding_dim,
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }

    /// Concatenates embedded datasets (cross-lingual combination). When `tags` is
    /// given, ids of part `k` are prefixed with `tags[k]:`.
    pub fn merge(parts: &[EmbeddedDataset], tags: Option<&[String]>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("no datasets to merge".into()))?;
        if let Some(tags) = tags {
            if tags.len() != parts.len() {
                return Err(invalid("one tag per dataset is required"));
            }
        }
        let mut instances = Vec::new();
        for (k, part) in parts.iter().enumerate() {
            check_class_names(&first.class_names, &part.class_names)?;
            if part.embedding_dim != first.embedding_dim {
                return Err(Error::Shape(format!(
                    "embedding width {} vs {}",
                    first.embedding_dim, part.embedding_dim
                )));
            }
            let tag = tags.map(|t| t[k].as_str());
            for inst in &part.instances {
                instances.push(EmbeddedInstance {
                    id: prefixed_id(tag, &inst.id),
                    ..inst.clone()
                });
            }
        }
        Self::new(first.class_names.clone(), first.embedding_dim, instances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_file() {
        let ds = parse_semeval_tsv(b"ID\tTweet\tanger\tjoy\n7\thello\t0\t1\n").unwrap();
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.class_names, ["anger", "joy"]);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.instances[0].id, "7");
        assert_eq!(ds.instances[0].text, "hello");
        assert_eq!(
            ds.instances[0].labels.as_ref().unwrap().bits(),
            &[false, true]
        );
    }

    #[test]
    fn accepts_crlf_and_missing_trailing_newline() {
        let ds = parse_semeval_tsv(b"ID\tTweet\ta\r\n1\tx y\t1\r\n2\tz\t0").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.instances[0].text, "x y");
    }

    #[test]
    fn rejects_non_binary_label_with_line_number() {
        let err = parse_semeval_tsv(b"ID\tTweet\tanger\tjoy\n7\thello\t0\t2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_field_count() {
        let err = parse_semeval_tsv(b"ID\tTweet\ta\tb\n1\tx\t1\n2\ty\t0\t1\t1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn rejects_empty_and_invalid_utf8() {
        assert!(matches!(parse_semeval_tsv(b""), Err(Error::Empty(_))));
        let err = parse_semeval_tsv(b"ID\tTweet\ta\n1\tok\t1\n2\t\xff\xfe\t0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn keeps_all_zero_rows() {
        let ds = parse_semeval_tsv(b"ID\tTweet\ta\tb\n1\tnothing\t0\t0\n").unwrap();
        assert_eq!(ds.instances[0].labels.as_ref().unwrap().count_active(), 0);
    }

    #[test]
    fn merge_checks_class_order() {
        let a = parse_semeval_tsv(b"ID\tTweet\tanger\tjoy\n1\tx\t1\t0\n").unwrap();
        let b = parse_semeval_tsv(b"ID\tTweet\tjoy\tanger\n1\tx\t1\t0\n").unwrap();
        match merge_datasets(&[a, b]).unwrap_err() {
            Error::ClassMismatch { columns, .. } => assert_eq!(columns, vec![0, 1]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn merge_single_prefixes_ids() {
        let a = parse_semeval_tsv(b"ID\tTweet\tanger\n1\tx\t1\n2\ty\t0\n")
            .unwrap()
            .with_language_tag("en");
        let merged = merge_datasets(std::slice::from_ref(&a)).unwrap();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.instances[0].id, "en:1");
        assert_eq!(merged.instances[1].text, "y");
    }

    #[test]
    fn merge_sizes_add_up() {
        let make = |tag: &str, n: usize| {
            let mut s = String::from("ID\tTweet\ta\tb\n");
            for i in 0..n {
                s.push_str(&format!("{i}\tt{i}\t{}\t0\n", i % 2));
            }
            parse_semeval_tsv(s.as_bytes())
                .unwrap()
                .with_language_tag(tag)
        };
        let merged =
            merge_datasets(&[make("ar", 3561), make("en", 6838), make("es", 2278)]).unwrap();
        assert_eq!(merged.len(), 12_677);
    }

    #[test]
    fn embedded_instance_validation() {
        assert!(EmbeddedInstance::new("a", Array2::zeros((0, 3)), None).is_err());
        assert!(EmbeddedInstance::new("", Array2::zeros((1, 3)), None).is_err());
        let mut bad = Array2::zeros((2, 2));
        bad[[1, 1]] = f32::NAN;
        assert!(EmbeddedInstance::new("a", bad, None).is_err());
    }
}
