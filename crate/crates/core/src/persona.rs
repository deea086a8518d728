//! Synthetic social media users.
//!
//! A user is one option from each of seven attribute categories. The option
//! sentences live in a bundled text asset (`assets/attributes.txt`) and are
//! verbalized verbatim after the fixed prefix [`PERSONA_PREFIX`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const PERSONA_PREFIX: &str = "You are a social media user.";

/// Category names in sampling order.
pub const CATEGORY_NAMES: [&str; 7] = [
    "gender",
    "age",
    "ethnicity",
    "education",
    "income",
    "political_leaning",
    "voter_registration",
];

const CANONICAL_ASSET: &str = include_str!("../assets/attributes.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PersonaError {
    #[error("attribute asset line {line}: {msg}")]
    Asset { line: usize, msg: String },
    #[error("attribute asset: {0}")]
    Invalid(String),
    #[error("unknown attribute category `{0}`")]
    UnknownCategory(String),
    #[error("category `{category}` has no option matching `{option}`")]
    UnknownOption { category: String, option: String },
    #[error("`{option}` matches several options of category `{category}`")]
    AmbiguousOption { category: String, option: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeCategory {
    pub name: String,
    pub options: Vec<String>,
}

/// The seven attribute categories plus an optional set of pinned options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSpace {
    categories: Vec<AttributeCategory>,
    render_order: Vec<usize>,
    restriction: BTreeMap<usize, usize>,
}

/// One sampled user: an option index per category, plus the seed it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserProfile {
    pub choices: Vec<usize>,
    pub seed: u64,
}

impl AttributeSpace {
    /// The bundled attribute space.
    pub fn canonical() -> Self {
        Self::parse(CANONICAL_ASSET).expect("bundled attribute asset is valid")
    }

    /// Parses an attribute asset.
    pub fn parse(text: &str) -> Result<Self, PersonaError> {
        let mut categories: Vec<AttributeCategory> = Vec::new();
        let mut render: Option<Vec<String>> = None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("render:") {
                render = Some(rest.split_whitespace().map(str::to_owned).collect());
            } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                categories.push(AttributeCategory {
                    name: name.trim().to_owned(),
                    options: Vec::new(),
                });
            } else {
                let cat = categories.last_mut().ok_or_else(|| PersonaError::Asset {
                    line: line_no,
                    msg: "option before any [category] header".into(),
                })?;
                cat.options.push(line.trim().to_owned());
            }
        }

        let names: Vec<&str> = categories.iter().map(|c| c.name.as_str()).collect();
        if names != CATEGORY_NAMES {
            return Err(PersonaError::Invalid(format!(
                "expected categories {CATEGORY_NAMES:?}, found {names:?}"
            )));
        }
        if let Some(c) = categories.iter().find(|c| c.options.is_empty()) {
            return Err(PersonaError::Invalid(format!("category `{}` has no options", c.name)));
        }

        let render_order = match render {
            None => (0..categories.len()).collect(),
            Some(order) => {
                let idx: Vec<usize> = order
                    .iter()
                    .map(|n| {
                        CATEGORY_NAMES
                            .iter()
                            .position(|c| c == n)
                            .ok_or_else(|| PersonaError::UnknownCategory(n.clone()))
                    })
                    .collect::<Result<_, _>>()?;
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                if sorted != (0..categories.len()).collect::<Vec<_>>() {
                    return Err(PersonaError::Invalid(
                        "render order must list every category exactly once".into(),
                    ));
                }
                idx
            }
        };

        Ok(Self {
            categories,
            render_order,
            restriction: BTreeMap::new(),
        })
    }

    pub fn categories(&self) -> &[AttributeCategory] {
        &self.categories
    }

    pub fn restriction(&self) -> &BTreeMap<usize, usize> {
        &self.restriction
    }

    /// Number of distinct profiles the unrestricted space can produce.
    pub fn profile_count(&self) -> usize {
        self.categories.iter().map(|c| c.options.len()).product()
    }

    /// Pins `category` to the single option matching `option`.
    ///
    /// `option` may be the full option sentence or a word-bounded fragment of
    /// it (e.g. `"Democrat"`) that identifies exactly one option. Restricting
    /// an already restricted category replaces the previous pin.
    pub fn restrict(&self, category: &str, option: &str) -> Result<Self, PersonaError> {
        let ci = self
            .categories
            .iter()
            .position(|c| c.name == category)
            .ok_or_else(|| PersonaError::UnknownCategory(category.to_owned()))?;
        let opts = &self.categories[ci].options;

        let oi = match opts.iter().position(|o| o == option) {
            Some(exact) => exact,
            None => {
                let hits: Vec<usize> = (0..opts.len())
                    .filter(|&i| contains_word(&opts[i], option))
                    .collect();
                match hits.as_slice() {
                    [one] => *one,
                    [] => {
                        return Err(PersonaError::UnknownOption {
                            category: category.to_owned(),
                            option: option.to_owned(),
                        })
                    }
                    _ => {
                        return Err(PersonaError::AmbiguousOption {
                            category: category.to_owned(),
                            option: option.to_owned(),
                        })
                    }
                }
            }
        };

        let mut out = self.clone();
        out.restriction.insert(ci, oi);
        Ok(out)
    }

    /// Samples one profile: restricted categories take their pinned option,
    /// all others are drawn uniformly and independently.
    pub fn sample_profile<R: Rng + ?Sized>(&self, rng: &mut R, seed: u64) -> UserProfile {
        let choices = self
            .categories
            .iter()
            .enumerate()
            .map(|(ci, cat)| match self.restriction.get(&ci) {
                Some(&fixed) => fixed,
                None => rng.gen_range(0..cat.options.len()),
            })
            .collect();
        UserProfile { choices, seed }
    }

    /// Samples a profile from a fresh stream seeded by `seed`.
    pub fn sample_seeded(&self, seed: u64) -> UserProfile {
        self.sample_profile(&mut crate::seed::rng(seed), seed)
    }

    pub fn is_valid(&self, profile: &UserProfile) -> bool {
        profile.choices.len() == self.categories.len()
            && profile
                .choices
                .iter()
                .zip(&self.categories)
                .all(|(&c, cat)| c < cat.options.len())
    }

    /// Renders the persona prompt: the prefix, then one sentence per
    /// category, space separated.
    pub fn verbalize(&self, profile: &UserProfile) -> String {
        debug_assert!(self.is_valid(profile));
        let mut out = String::from(PERSONA_PREFIX);
        for &ci in &self.render_order {
            out.push(' ');
            out.push_str(&self.categories[ci].options[profile.choices[ci]]);
        }
        out
    }

    /// Enumerates every profile of the unrestricted space, in mixed-radix order.
    pub fn all_profiles(&self) -> Vec<UserProfile> {
        let radices: Vec<usize> = self.categories.iter().map(|c| c.options.len()).collect();
        (0..self.profile_count())
            .map(|mut n| {
                let choices = radices
                    .iter()
                    .map(|&r| {
                        let d = n % r;
                        n /= r;
                        d
                    })
                    .collect();
                UserProfile { choices, seed: 0 }
            })
            .collect()
    }
}

fn contains_word(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    hay.match_indices(needle).any(|(start, m)| {
        let before = hay[..start].chars().next_back();
        let after = hay[start + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}
