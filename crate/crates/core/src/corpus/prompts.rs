//! Summary-generation prompts per source domain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::graphml::GraphMlSchema;
use crate::error::{Error, Result};

pub const SEED_PLACEHOLDER: &str = "{seed}";
pub const GRAPHML_PLACEHOLDER: &str = "{GraphML}";

const ACADEMIC: &str = include_str!("../../assets/prompts/academic.txt");
const E_COMMERCE: &str = include_str!("../../assets/prompts/e_commerce.txt");
const SOCIAL: &str = include_str!("../../assets/prompts/social.txt");

/// Source-graph domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "academic")]
    Academic,
    #[serde(rename = "e-commerce")]
    ECommerce,
    #[serde(rename = "social")]
    Social,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Academic, Domain::ECommerce, Domain::Social];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Academic => "academic",
            Domain::ECommerce => "e-commerce",
            Domain::Social => "social",
        }
    }

    /// Stored prompt template.
    pub fn template(self) -> &'static str {
        match self {
            Domain::Academic => ACADEMIC,
            Domain::ECommerce => E_COMMERCE,
            Domain::Social => SOCIAL,
        }
    }

    /// Default GraphML schema for the domain.
    pub fn schema(self) -> GraphMlSchema {
        match self {
            Domain::Academic => GraphMlSchema::academic(),
            Domain::ECommerce => GraphMlSchema::e_commerce(),
            Domain::Social => GraphMlSchema::social(),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "academic" => Ok(Domain::Academic),
            "e-commerce" | "e_commerce" => Ok(Domain::ECommerce),
            "social" => Ok(Domain::Social),
            other => Err(Error::Validation(format!(
                "unknown domain `{other}` (expected academic, e-commerce or social)"
            ))),
        }
    }
}

/// Substitutes `{seed}` and `{GraphML}` in one left-to-right pass, so text
/// inside the inserted document is never rescanned.
pub fn render_template(template: &str, graphml: &str, seed_index: usize) -> String {
    let seed = seed_index.to_string();
    let mut out = String::with_capacity(template.len() + graphml.len());
    let mut rest = template;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix(SEED_PLACEHOLDER) {
            out.push_str(&seed);
            rest = after;
        } else if let Some(after) = tail.strip_prefix(GRAPHML_PLACEHOLDER) {
            out.push_str(graphml);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Renders the stored template for `domain`.
pub fn render_summary_prompt(graphml: &str, domain: Domain, seed_index: usize) -> String {
    render_template(domain.template(), graphml, seed_index)
}
