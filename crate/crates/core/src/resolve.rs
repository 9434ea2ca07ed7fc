//! Completing contract identities from chain data.
//!
//! The offline [`ChainCache`] is the default source. With the `online`
//! feature, [`http::HttpSource`] queries a node and a source registry and
//! writes what it finds through to the cache.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bytecode::{decode_hex, fingerprint_bytecode};
use crate::error::{Error, Result};
use crate::model::{Address, Assessment, ChainId, ContractIdentity, Digest};
use crate::source::{fingerprint_source, normalize_source};

/// Blocks from this height on may hold create2 deployments.
pub const CREATE2_BLOCK: u64 = 7_280_000;

/// One deployed contract as recorded in the cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub address: Address,
    pub chain: ChainId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment_block: Option<u64>,
    pub runtime_hex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deploy_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract_name: Option<String>,
}

impl ChainRecord {
    fn validate(&self) -> Result<()> {
        if self.chain == ChainId::Unknown {
            return Err(Error::validation("chain", format!("{}: UNKNOWN is not a chain", self.address)));
        }
        decode_hex(&self.runtime_hex)?;
        if let Some(d) = &self.deploy_hex {
            decode_hex(d)?;
        }
        Ok(())
    }

    /// The identity this record stands for on its own.
    pub fn identity(&self) -> ContractIdentity {
        let mut id = ContractIdentity {
            address: Some(self.address),
            chain: Some(self.chain),
            deployment_block: self.deployment_block,
            contract_name: self.contract_name.clone(),
            ..ContractIdentity::default()
        };
        if let Ok(code) = decode_hex(&self.runtime_hex) {
            if !code.is_empty() {
                id.runtime_fp = Some(fingerprint_bytecode(&code));
            }
        }
        if let Some(Ok(code)) = self.deploy_hex.as_deref().map(decode_hex) {
            if !code.is_empty() {
                id.deploy_fp = Some(fingerprint_bytecode(&code));
            }
        }
        if let Some(text) = &self.source_text {
            let norm = normalize_source(text);
            if !norm.text.is_empty() {
                let fps = fingerprint_source(&norm);
                id.source_fp = Some(fps.source_fp);
                id.source_fp_nopragma = Some(fps.source_fp_nopragma);
                if id.contract_name.is_none() {
                    id.contract_name = norm.contract_names.last().cloned();
                }
            }
        }
        id
    }
}

/// In-memory cache with indices by `(address, chain)` and by source fingerprint.
#[derive(Debug, Clone, Default)]
pub struct ChainCache {
    records: BTreeMap<(ChainId, Address), (ChainRecord, ContractIdentity)>,
    by_source: HashMap<Digest, Vec<(ChainId, Address)>>,
}

impl ChainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Adds a record; a second record for the same `(address, chain)` is an error.
    pub fn insert(&mut self, record: ChainRecord) -> Result<()> {
        record.validate()?;
        let key = (record.chain, record.address);
        if self.records.contains_key(&key) {
            return Err(Error::DuplicateId(format!("{}:{}", record.chain, record.address)));
        }
        let identity = record.identity();
        if let Some(fp) = identity.source_fp {
            self.by_source.entry(fp).or_default().push(key);
        }
        self.records.insert(key, (record, identity));
        Ok(())
    }

    pub fn get(&self, address: &Address, chain: ChainId) -> Option<&ChainRecord> {
        self.records.get(&(chain, *address)).map(|(r, _)| r)
    }

    fn identity_of(&self, address: &Address, chain: ChainId) -> Option<&ContractIdentity> {
        self.records.get(&(chain, *address)).map(|(_, i)| i)
    }

    /// Records whose source normalizes to `fp`, in canonical order.
    pub fn by_source(&self, fp: &Digest) -> Vec<&ChainRecord> {
        let mut keys = self.by_source.get(fp).cloned().unwrap_or_default();
        keys.sort();
        keys.iter().map(|k| &self.records[k].0).collect()
    }

    /// Records in canonical order: chain, then address.
    pub fn iter(&self) -> impl Iterator<Item = &ChainRecord> {
        self.records.values().map(|(r, _)| r)
    }

    pub fn from_reader<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut cache = ChainCache::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let record: ChainRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            cache.insert(record).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(cache)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.iter() {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<cache>", e))?;
        }
        Ok(())
    }
}

pub fn load_cache(path: &Path) -> Result<ChainCache> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ChainCache::from_reader(BufReader::new(file), path)
}

/// Writes through a sibling temp file, so a crash never leaves a truncated cache.
pub fn save_cache(cache: &ChainCache, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    cache.write(&mut buf)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Something that can tell what code lives at an address on a chain.
///
/// `Ok(None)` means not found; `Err` is a service failure worth retrying.
pub trait ChainSource {
    fn code_at(&mut self, address: &Address, chain: ChainId) -> Result<Option<ContractIdentity>>;
}

impl ChainSource for ChainCache {
    fn code_at(&mut self, address: &Address, chain: ChainId) -> Result<Option<ContractIdentity>> {
        Ok(self.identity_of(address, chain).cloned())
    }
}

/// What happened to one identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    ByAddress,
    NotFound,
    BySource,
    Ambiguous,
    Unchanged,
}

/// Fills gaps in `target` from `found`. Present fields are kept, except that
/// bytecode fingerprints from the chain replace conflicting provided ones.
fn merge(target: &mut ContractIdentity, found: &ContractIdentity, warnings: &mut Vec<String>, who: &str) {
    fn fill<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
        if slot.is_none() {
            slot.clone_from(value);
        }
    }
    fill(&mut target.address, &found.address);
    fill(&mut target.chain, &found.chain);
    fill(&mut target.deployment_block, &found.deployment_block);
    for (name, slot, value) in [
        ("runtime", &mut target.runtime_fp, &found.runtime_fp),
        ("deployment", &mut target.deploy_fp, &found.deploy_fp),
    ] {
        match (&*slot, value) {
            (Some(a), Some(b)) if a != b => {
                warnings.push(format!("{who}: provided {name} code differs from the chain's; using the chain's"));
                *slot = Some(*b);
            }
            _ => fill(slot, value),
        }
    }
    if let (Some(a), Some(b)) = (&target.source_fp, &found.source_fp) {
        if a != b {
            warnings.push(format!("{who}: provided source differs from the registry's; keeping the provided one"));
        }
    } else if target.source_fp.is_none() && found.source_fp.is_some() {
        target.source_fp = found.source_fp;
        target.source_fp_nopragma = found.source_fp_nopragma;
    }
    fill(&mut target.contract_name, &found.contract_name);
    if let Some(b) = target.deployment_block {
        if b >= CREATE2_BLOCK {
            warnings.push(format!("{who}: deployed at block {b}, where create2 contracts may occur"));
        }
    }
}

/// Probes the chains in fixed order and fills the identity from the first hit.
pub fn resolve_by_address(
    identity: &ContractIdentity,
    source: &mut dyn ChainSource,
    warnings: &mut Vec<String>,
) -> Result<(ContractIdentity, Outcome)> {
    let Some(address) = identity.address else {
        return Ok((identity.clone(), Outcome::Unchanged));
    };
    let mut out = identity.clone();
    for chain in ChainId::PROBE_ORDER {
        if let Some(found) = source.code_at(&address, chain)? {
            merge(&mut out, &found, warnings, &address.to_string());
            return Ok((out, Outcome::ByAddress));
        }
    }
    out.chain = Some(ChainId::Unknown);
    Ok((out, Outcome::NotFound))
}

/// Looks the source fingerprint up in the cache; fills only on a unique deployment.
pub fn resolve_by_source(
    identity: &ContractIdentity,
    cache: &ChainCache,
    warnings: &mut Vec<String>,
) -> (ContractIdentity, Outcome) {
    let Some(fp) = identity.source_fp else {
        return (identity.clone(), Outcome::Unchanged);
    };
    let candidates: Vec<&ChainRecord> = cache
        .by_source(&fp)
        .into_iter()
        .filter(|r| {
            let name = cache.identity_of(&r.address, r.chain).and_then(|i| i.contract_name.as_ref());
            match (&identity.contract_name, name) {
                (Some(want), Some(have)) => want == have,
                _ => true,
            }
        })
        .collect();
    match candidates.as_slice() {
        [] => (identity.clone(), Outcome::Unchanged),
        [one] => {
            let mut out = identity.clone();
            let found = cache.identity_of(&one.address, one.chain).unwrap();
            merge(&mut out, found, warnings, &fp.to_string());
            (out, Outcome::BySource)
        }
        many => {
            warnings.push(format!("source {fp}: {} deployments match; left unresolved", many.len()));
            (identity.clone(), Outcome::Ambiguous)
        }
    }
}

/// Resolves one identity: by address when it has one, otherwise by source.
///
/// Identities that already carry a chain are left alone, so resolving twice
/// changes nothing.
pub fn resolve_identity(
    identity: &ContractIdentity,
    source: &mut dyn ChainSource,
    cache: &ChainCache,
    warnings: &mut Vec<String>,
) -> Result<(ContractIdentity, Outcome)> {
    if identity.chain.is_some() {
        return Ok((identity.clone(), Outcome::Unchanged));
    }
    if identity.address.is_some() {
        resolve_by_address(identity, source, warnings)
    } else if identity.source_fp.is_some() {
        Ok(resolve_by_source(identity, cache, warnings))
    } else {
        Ok((identity.clone(), Outcome::Unchanged))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveReport {
    pub identities: usize,
    pub outcomes: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Resolves every distinct identity once and writes the result back into the assessments.
pub fn resolve_all(
    assessments: &mut [Assessment],
    source: &mut dyn ChainSource,
    cache: &ChainCache,
) -> Result<ResolveReport> {
    let mut report = ResolveReport::default();
    let mut done: HashMap<String, ContractIdentity> = HashMap::new();
    for a in assessments.iter_mut() {
        let key = serde_json::to_string(&a.contract)?;
        if let Some(id) = done.get(&key) {
            a.contract = id.clone();
            continue;
        }
        let (id, outcome) = resolve_identity(&a.contract, source, cache, &mut report.warnings)?;
        let name = serde_json::to_value(outcome)?.as_str().unwrap_or_default().to_string();
        *report.outcomes.entry(name).or_default() += 1;
        report.identities += 1;
        a.contract = id.clone();
        done.insert(key, id);
    }
    report.warnings.sort();
    report.warnings.dedup();
    Ok(report)
}

#[cfg(feature = "online")]
pub mod http {
    //! Node RPC and source-registry client with write-through to the cache.

    use std::collections::BTreeMap;
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::{ChainCache, ChainRecord, ChainSource};
    use crate::error::{Error, Result};
    use crate::model::{Address, ChainId, ContractIdentity};

    pub const ENV_API_KEY: &str = "SCGT_ETHERSCAN_API_KEY";
    pub const ENV_REGISTRY_URL: &str = "SCGT_ETHERSCAN_URL";

    pub fn rpc_env_var(chain: ChainId) -> String {
        format!("SCGT_RPC_URL_{}", chain.as_str())
    }

    #[derive(Debug, Clone)]
    pub struct HttpConfig {
        pub rpc_urls: BTreeMap<ChainId, String>,
        pub registry_url: Option<String>,
        pub api_key: String,
        pub timeout: Duration,
    }

    impl HttpConfig {
        /// Reads endpoints from the environment. Fails without an API key.
        pub fn from_env() -> Result<Self> {
            let api_key = std::env::var(ENV_API_KEY)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| Error::validation(ENV_API_KEY, "not set; required with --online"))?;
            let rpc_urls: BTreeMap<ChainId, String> = ChainId::PROBE_ORDER
                .into_iter()
                .filter_map(|c| std::env::var(rpc_env_var(c)).ok().map(|u| (c, u)))
                .collect();
            if rpc_urls.is_empty() {
                return Err(Error::validation("SCGT_RPC_URL_*", "no node endpoint configured"));
            }
            Ok(HttpConfig {
                rpc_urls,
                registry_url: std::env::var(ENV_REGISTRY_URL).ok(),
                api_key,
                timeout: Duration::from_secs(30),
            })
        }
    }

    pub struct HttpSource<'c> {
        config: HttpConfig,
        agent: ureq::Agent,
        cache: &'c mut ChainCache,
    }

    fn service(e: impl std::fmt::Display) -> Error {
        Error::Service(e.to_string())
    }

    impl<'c> HttpSource<'c> {
        pub fn new(config: HttpConfig, cache: &'c mut ChainCache) -> Self {
            let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
            HttpSource { config, agent, cache }
        }

        fn get_code(&self, url: &str, address: &Address) -> Result<Option<String>> {
            let body = json!({
                "jsonrpc": "2.0", "id": 1, "method": "eth_getCode",
                "params": [format!("0x{}", address.to_hex()), "latest"],
            });
            let resp: Value = self.agent.post(url).send_json(body).map_err(service)?.into_json().map_err(service)?;
            if let Some(err) = resp.get("error") {
                return Err(service(format!("eth_getCode: {err}")));
            }
            let code = resp
                .get("result")
                .and_then(Value::as_str)
                .ok_or_else(|| service("eth_getCode: no result"))?;
            let hex = code.trim_start_matches("0x");
            Ok((!hex.is_empty()).then(|| hex.to_string()))
        }

        fn get_source(&self, address: &Address) -> Result<(Option<String>, Option<String>)> {
            let Some(url) = &self.config.registry_url else {
                return Ok((None, None));
            };
            let resp: Value = self
                .agent
                .get(url)
                .query("module", "contract")
                .query("action", "getsourcecode")
                .query("address", &format!("0x{}", address.to_hex()))
                .query("apikey", &self.config.api_key)
                .call()
                .map_err(service)?
                .into_json()
                .map_err(service)?;
            let item = resp.pointer("/result/0");
            let text = item
                .and_then(|i| i.get("SourceCode"))
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            let name = item
                .and_then(|i| i.get("ContractName"))
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            Ok((text, name))
        }
    }

    impl ChainSource for HttpSource<'_> {
        fn code_at(&mut self, address: &Address, chain: ChainId) -> Result<Option<ContractIdentity>> {
            if let Some(found) = self.cache.code_at(address, chain)? {
                return Ok(Some(found));
            }
            let Some(url) = self.config.rpc_urls.get(&chain) else {
                return Ok(None);
            };
            let Some(runtime_hex) = self.get_code(url, address)? else {
                return Ok(None);
            };
            let (source_text, contract_name) = if chain == ChainId::Mainnet {
                self.get_source(address)?
            } else {
                (None, None)
            };
            let record = ChainRecord {
                address: *address,
                chain,
                deployment_block: None,
                runtime_hex,
                deploy_hex: None,
                source_text,
                contract_name,
            };
            let identity = record.identity();
            self.cache.insert(record)?;
            Ok(Some(identity))
        }
    }
}
