//! Label sentences for zero-shot inference.
//!
//! Asset format (UTF-8, tab separated, `#` starts a comment line):
//!
//! ```text
//! class_id<TAB>class_name<TAB>template<TAB>description
//! ```
//!
//! Templates use `{class}` and `{class_desc}` slots.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::text::TextEncoder;

/// Per-dataset templates for rendering label sentences.
pub const DATASET_TEMPLATES: &[(&str, &str)] = &[
    ("cora", "this paper has a topic on {class} {class_desc}"),
    ("citeseer", "good paper of {class} {class_desc}"),
    ("wikics", "it belongs to {class} research area {class_desc}"),
    ("instagram", "{class} {class_desc}"),
    ("ele-photo", "this product belongs to {class} {class_desc}"),
    ("computers", "is {class} category {class_desc}"),
    ("history", "this book belongs to {class} {class_desc}"),
];

pub fn dataset_template(dataset: &str) -> Option<&'static str> {
    let key = dataset.to_ascii_lowercase();
    DATASET_TEMPLATES.iter().find(|(d, _)| *d == key).map(|(_, t)| *t)
}

/// Fills `{class}` and `{class_desc}` in one left-to-right pass, so slot text
/// inside substituted values is never expanded again.
pub fn render_template(template: &str, class: &str, class_desc: &str) -> String {
    let mut out = String::with_capacity(template.len() + class.len() + class_desc.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(t) = tail.strip_prefix("{class_desc}") {
            out.push_str(class_desc);
            rest = t;
        } else if let Some(t) = tail.strip_prefix("{class}") {
            out.push_str(class);
            rest = t;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out.trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelPrompt {
    pub class_id: usize,
    pub class_name: String,
    pub template: String,
    pub description: String,
}

impl LabelPrompt {
    pub fn sentence(&self) -> String {
        render_template(&self.template, &self.class_name, &self.description)
    }
}

/// One rendered, embedded sentence per class; row `k` of `embeddings` is `u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPromptSet {
    pub prompts: Vec<LabelPrompt>,
    pub sentences: Vec<String>,
    pub embeddings: Array2<f64>,
}

impl LabelPromptSet {
    /// Prompts must carry class ids `0..K` in order.
    pub fn new(prompts: Vec<LabelPrompt>, text: &dyn TextEncoder) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::Validation("label prompt set is empty".into()));
        }
        for (k, p) in prompts.iter().enumerate() {
            if p.class_id != k {
                return Err(Error::Validation(format!(
                    "label prompts must list class ids 0..K in order; found {} at position {k}",
                    p.class_id
                )));
            }
            if !p.template.contains("{class}") {
                return Err(Error::Validation(format!("template for class {k} lacks a {{class}} slot")));
            }
        }
        let sentences: Vec<String> = prompts.iter().map(LabelPrompt::sentence).collect();
        let mut embeddings = Array2::zeros((prompts.len(), text.dim()));
        for (k, s) in sentences.iter().enumerate() {
            let e = text.encode(s)?;
            embeddings.row_mut(k).assign(&ndarray::ArrayView1::from(&e.values));
        }
        Ok(Self {
            prompts,
            sentences,
            embeddings,
        })
    }

    /// Same template for every class.
    pub fn from_classes(
        template: &str,
        classes: &[(String, String)],
        text: &dyn TextEncoder,
    ) -> Result<Self> {
        let prompts = classes
            .iter()
            .enumerate()
            .map(|(k, (name, desc))| LabelPrompt {
                class_id: k,
                class_name: name.clone(),
                template: template.to_string(),
                description: desc.clone(),
            })
            .collect();
        Self::new(prompts, text)
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn parse_asset(content: &str, origin: &Path) -> Result<Vec<LabelPrompt>> {
        let mut out = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let class_id = fields[0].trim().parse().map_err(|_| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("bad class id `{}`", fields[0]),
            })?;
            out.push(LabelPrompt {
                class_id,
                class_name: fields[1].to_string(),
                template: fields[2].to_string(),
                description: fields[3].to_string(),
            });
        }
        out.sort_by_key(|p| p.class_id);
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>, text: &dyn TextEncoder) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(Self::parse_asset(&content, path)?, text)
    }

    pub fn to_asset(&self) -> String {
        let mut out = String::from("# class_id\tclass_name\ttemplate\tdescription\n");
        for p in &self.prompts {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", p.class_id, p.class_name, p.template, p.description));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::HashEmbedEncoder;

    #[test]
    fn renders_dataset_templates() {
        let t = dataset_template("Cora").unwrap();
        assert_eq!(
            render_template(t, "neural networks", "about learning"),
            "this paper has a topic on neural networks about learning"
        );
        let t = dataset_template("wikics").unwrap();
        assert_eq!(render_template(t, "databases", ""), "it belongs to databases research area");
    }

    #[test]
    fn values_containing_slots_are_not_reexpanded() {
        assert_eq!(render_template("{class}: {class_desc}", "{class_desc}", "x"), "{class_desc}: x");
        assert_eq!(render_template("a {b} {class}", "c", ""), "a {b} c");
    }

    #[test]
    fn asset_round_trip() {
        let enc = HashEmbedEncoder::new(8, 0);
        let set = LabelPromptSet::from_classes(
            "good paper of {class} {class_desc}",
            &[("alpha".into(), "first".into()), ("beta".into(), "second".into())],
            &enc,
        )
        .unwrap();
        let parsed = LabelPromptSet::parse_asset(&set.to_asset(), Path::new("mem")).unwrap();
        assert_eq!(parsed, set.prompts);
        assert_eq!(set.sentences[1], "good paper of beta second");
    }

    #[test]
    fn malformed_asset_reports_line() {
        let err = LabelPromptSet::parse_asset("# header\n0\tonly two\n", Path::new("a.tsv")).unwrap_err();
        assert!(err.to_string().starts_with("a.tsv:2:"), "{err}");
    }

    #[test]
    fn ids_must_be_contiguous() {
        let enc = HashEmbedEncoder::new(8, 0);
        let p = LabelPrompt {
            class_id: 1,
            class_name: "x".into(),
            template: "{class}".into(),
            description: String::new(),
        };
        assert!(LabelPromptSet::new(vec![p], &enc).is_err());
        assert!(LabelPromptSet::new(vec![], &enc).is_err());
    }
}
