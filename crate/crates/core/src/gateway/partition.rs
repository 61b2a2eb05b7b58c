//! LLM-assisted spatial partitioning: ask the backend to summarize an
//! object region by region, then parse the reply into spatial
//! [`StateRecord`]s.
//!
//! Directly partitioning a complex object is often impractical, so the
//! summarizer delegates: the backend describes each region as a short
//! clause (`<region name> <attribute> <value>;`) and a schema maps the
//! attribute tokens to feature dimensions. Malformed replies are an error —
//! never a silently shortened region list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{Dim, FeatureVector, RawRef, StateRecord};
use crate::gateway::backend::Backend;
use crate::gateway::template::{Method, TemplateContext, TemplateRegistry};
use crate::scalar::Real;

/// Extractor id recorded on states parsed out of backend replies.
pub const PARTITION_EXTRACTOR_ID: &str = "llm:partition";

/// How one reply attribute token maps into feature space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    /// Feature dimension the parsed value lands in.
    pub dim: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

/// The parse schema: reply attribute token → feature dimension.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSchema {
    pub attributes: BTreeMap<String, AttributeSpec>,
}

impl PartitionSchema {
    pub fn new(attributes: BTreeMap<String, AttributeSpec>) -> Self {
        PartitionSchema { attributes }
    }
}

/// Parses a region-per-clause reply against the schema, preserving reply
/// order. Repeated mentions of a region merge into one entry; a region
/// repeating the same attribute is malformed.
pub fn parse_partition_summary<S: Real>(
    reply: &str,
    schema: &PartitionSchema,
) -> Result<Vec<(String, FeatureVector<S>)>> {
    let mut regions: Vec<(String, Vec<Dim<S>>)> = Vec::new();
    for clause in reply.split(';') {
        let clause = clause.trim();
        if clause.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = clause.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(Error::UnparseableSummary {
                detail: format!(
                    "clause `{clause}` is too short (want `<region> <attribute> <value>`)"
                ),
            });
        }
        let value_token = tokens[tokens.len() - 1];
        let attr_token = tokens[tokens.len() - 2];
        let region = tokens[..tokens.len() - 2].join(" ");

        let value: f64 = value_token.parse().map_err(|_| Error::UnparseableSummary {
            detail: format!("clause `{clause}` has non-numeric value `{value_token}`"),
        })?;
        let value = S::from_f64(value)
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::UnparseableSummary {
                detail: format!("value `{value_token}` is not representable"),
            })?;
        let spec = schema
            .attributes
            .get(attr_token)
            .ok_or_else(|| Error::UnparseableSummary {
                detail: format!("clause `{clause}` names unknown attribute `{attr_token}`"),
            })?;

        let dim = match &spec.unit {
            Some(unit) => Dim::with_unit(&spec.dim, value, unit),
            None => Dim::new(&spec.dim, value),
        };
        match regions.iter_mut().find(|(name, _)| *name == region) {
            Some((_, dims)) => {
                if dims.iter().any(|d| d.name == spec.dim) {
                    return Err(Error::UnparseableSummary {
                        detail: format!("region `{region}` repeats attribute `{attr_token}`"),
                    });
                }
                dims.push(dim);
            }
            None => regions.push((region, vec![dim])),
        }
    }
    if regions.is_empty() {
        return Err(Error::UnparseableSummary {
            detail: "reply named no regions".into(),
        });
    }
    regions
        .into_iter()
        .map(|(name, dims)| Ok((name, FeatureVector::new(dims)?)))
        .collect()
}

/// Asks the backend to partition `object` and parses the reply into
/// region-labeled spatial states. The raw reply is kept on every state as
/// its payload, so each parsed feature stays traceable to the text it came
/// from.
pub fn summarize_partition<S: Real>(
    object: &str,
    backend: &dyn Backend,
    registry: &TemplateRegistry,
    schema: &PartitionSchema,
    trial: u64,
) -> Result<Vec<StateRecord<S>>> {
    let ctx = TemplateContext::<S> {
        object: Some(object.to_string()),
        ..TemplateContext::default()
    };
    let prompt = registry.build_prompt(Method::Direct, &ctx, "spatial.partition_summary")?;
    let completion = backend.complete(&prompt, trial)?;
    let regions = parse_partition_summary::<S>(&completion.text, schema)?;
    Ok(regions
        .into_iter()
        .map(|(region, dims)| {
            StateRecord::spatial(
                format!("partition:{region}"),
                &region,
                PARTITION_EXTRACTOR_ID,
                Some(RawRef::Inline(completion.text.clone().into_bytes())),
                dims,
            )
        })
        .collect())
}
