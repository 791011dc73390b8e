//! One-hop knowledge-graph neighbors for entity expansion.

use std::collections::{BTreeMap, HashSet};

use serde_json::Value;

use super::{Entity, EntityOrigin};
use crate::error::{Error, Result};
use crate::oracles::http::{HttpOptions, JsonClient};

pub const DEFAULT_SPARQL_LIMIT: usize = 20;

/// Neighbor labels of an entity surface form.
pub trait EntityGraph: Send + Sync {
    fn neighbors(&self, surface: &str, limit: usize) -> Result<Vec<String>>;
}

/// Offline map `surface -> [neighbor surfaces]`. Unknown surfaces have no
/// neighbors.
#[derive(Debug, Clone, Default)]
pub struct FixtureGraph {
    map: BTreeMap<String, Vec<String>>,
}

impl FixtureGraph {
    pub fn new(map: BTreeMap<String, Vec<String>>) -> Self {
        FixtureGraph { map }
    }
}

impl EntityGraph for FixtureGraph {
    fn neighbors(&self, surface: &str, limit: usize) -> Result<Vec<String>> {
        Ok(self
            .map
            .get(surface)
            .map(|n| n.iter().take(limit).cloned().collect())
            .unwrap_or_default())
    }
}

/// The one-hop query, with `{id}` and `{limit}` filled in.
pub fn sparql_query(id: &str, limit: usize) -> String {
    format!(
        "SELECT ?property ?propertyLabel ?object ?objectLabel\n\
WHERE {{\n    wd:{id} ?property ?object.\n    ?property rdfs:label ?propertyLabel.\n    \
?object rdfs:label ?objectLabel.\n    FILTER(LANG(?propertyLabel) = \"en\")\n    \
FILTER(LANG(?objectLabel) = \"en\")\n}}\nLIMIT {limit}"
    )
}

/// Live Wikidata client: label search (top hit) for the item id, then the
/// one-hop SPARQL query.
#[derive(Debug, Clone)]
pub struct WikidataGraph {
    search_url: String,
    sparql_url: String,
    client: JsonClient,
}

impl WikidataGraph {
    pub fn new(search_url: impl Into<String>, sparql_url: impl Into<String>, opts: HttpOptions) -> Self {
        WikidataGraph {
            search_url: search_url.into(),
            sparql_url: sparql_url.into(),
            client: JsonClient::new(opts),
        }
    }

    pub fn resolve(&self, surface: &str) -> Result<String> {
        let resp = self.client.get_json(
            &self.search_url,
            &[
                ("action", "wbsearchentities"),
                ("search", surface),
                ("language", "en"),
                ("format", "json"),
                ("limit", "1"),
            ],
        )?;
        resp.get("search")
            .and_then(|s| s.get(0))
            .and_then(|hit| hit.get("id"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::ProtocolError(format!("no item found for {surface:?}")))
    }
}

impl EntityGraph for WikidataGraph {
    fn neighbors(&self, surface: &str, limit: usize) -> Result<Vec<String>> {
        let id = self.resolve(surface)?;
        let query = sparql_query(&id, limit);
        let resp = self
            .client
            .get_json(&self.sparql_url, &[("query", query.as_str()), ("format", "json")])?;
        let rows = resp
            .pointer("/results/bindings")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::ProtocolError("SPARQL reply lacks results.bindings".into()))?;
        Ok(rows
            .iter()
            .filter_map(|r| r.pointer("/objectLabel/value").and_then(Value::as_str))
            .map(str::to_string)
            .collect())
    }
}

/// Appends one-hop neighbors of every entity, deduplicated by surface.
/// Lookup failures are logged and skipped.
pub fn expand_entities(entities: &[Entity], limit: usize, graph: &dyn EntityGraph) -> Vec<Entity> {
    let mut out = entities.to_vec();
    let mut seen: HashSet<String> = entities.iter().map(|e| e.surface.clone()).collect();
    for e in entities {
        let found = match graph.neighbors(&e.surface, limit) {
            Ok(n) => n,
            Err(err) => {
                log::warn!("entity {:?}: no neighbors ({err})", e.surface);
                continue;
            }
        };
        for label in found {
            let label = label.trim();
            if !label.is_empty() && seen.insert(label.to_string()) {
                out.push(Entity {
                    surface: label.to_string(),
                    origin: EntityOrigin::Expanded,
                });
            }
        }
    }
    out
}
