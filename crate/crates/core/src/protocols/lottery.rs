//! A federated lottery with commitments.
//!
//! Clients additively share secrets among the servers. Each server draws a
//! random `rho` and a salt `psi`, publishes `alpha = H(rho, psi)`, and only then
//! opens `psi` and `rho`. After checking every commitment the servers agree on
//! the index `omega = sum(rho) mod |clients|` and send the analyst their shares
//! of client `omega`'s secret. The analyst adds them up.

use std::collections::BTreeMap;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::choreo::{ChoreoOp, Choreography, Result};
use crate::located::{Faceted, MultiplyLocated, Quire};
use crate::location::{census_of, Census, Location};
use crate::portable::{encode, DecodeError, Portable, Value};
use crate::runtime::RunReport;

use super::field::{field_shares, field_sum, FieldElement};
use super::ProtocolError;

pub const MIN_SALT: i64 = 1 << 18;
pub const MAX_SALT: i64 = 1 << 20;

/// `alpha = H(rho, psi)`, compared as hex text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Commitment(pub [u8; 32]);

impl Portable for Commitment {
    fn to_value(&self) -> Value {
        Value::text(hex::encode(self.0))
    }

    fn from_value(v: &Value) -> std::result::Result<Self, DecodeError> {
        let text = v.as_text()?;
        let bytes = hex::decode(text).ok().and_then(|b| <[u8; 32]>::try_from(b).ok());
        bytes.map(Commitment).ok_or_else(|| DecodeError::Shape {
            expected: "32-byte hex digest",
            found: text.to_owned(),
        })
    }
}

pub fn commit(rho: i64, psi: i64) -> Commitment {
    let bytes = encode(&Value::pair(Value::Int(rho), Value::Int(psi)));
    Commitment(Sha256::digest(&bytes).into())
}

pub fn verify(alpha: &Commitment, rho: i64, psi: i64) -> bool {
    commit(rho, psi) == *alpha
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RhoSource {
    /// Uniform in `[0, tau)`. `None` means `8 * |clients|`.
    Uniform { tau: Option<i64> },
    /// Fixed values, one per server.
    Fixed(Vec<i64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperTarget {
    Rho,
    Psi,
}

/// One server opens a different value than it committed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tamper {
    /// Index into the servers, from 0.
    pub server: usize,
    pub target: TamperTarget,
}

#[derive(Debug, Clone)]
pub struct Lottery {
    pub servers: usize,
    pub clients: usize,
    /// Client secrets, one per client.
    pub secrets: Vec<i64>,
    pub rho: RhoSource,
    pub tamper: Option<Tamper>,
}

/// The analyst's result, each server's `omega`, and the opened `rho` values as
/// the servers see them.
pub type LotteryOutput = (MultiplyLocated<FieldElement>, Faceted<i64>, Faceted<Quire<i64>>);

impl Lottery {
    pub fn new(servers: usize, clients: usize, secrets: Vec<i64>) -> Self {
        Lottery {
            servers,
            clients,
            secrets,
            rho: RhoSource::Uniform { tau: None },
            tamper: None,
        }
    }

    pub fn server_names(&self) -> Vec<String> {
        (1..=self.servers).map(|i| format!("server{i}")).collect()
    }

    pub fn client_names(&self) -> Vec<String> {
        (1..=self.clients).map(|i| format!("client{i}")).collect()
    }

    fn draw_rho(&self, index: usize, rng: &mut impl Rng) -> std::result::Result<i64, ProtocolError> {
        match &self.rho {
            RhoSource::Uniform { tau } => {
                let tau = tau.unwrap_or(8 * self.clients as i64);
                if tau < 1 {
                    return Err(ProtocolError::Invalid(format!("tau must be positive, got {tau}")));
                }
                Ok(rng.random_range(0..tau))
            }
            RhoSource::Fixed(v) => v.get(index).copied().ok_or_else(|| {
                ProtocolError::Invalid(format!("no fixed rho for server {}", index + 1))
            }),
        }
    }

    fn tampered(&self, index: usize, target: TamperTarget) -> bool {
        self.tamper
            .is_some_and(|t| t.server == index && t.target == target)
    }
}

impl Choreography for Lottery {
    type Output = LotteryOutput;

    fn census(&self) -> Census {
        let mut names = vec!["analyst".to_owned()];
        names.extend(self.server_names());
        names.extend(self.client_names());
        census_of(&names).expect("generated names are distinct")
    }

    fn run(&self, op: &ChoreoOp<'_>) -> Result<LotteryOutput> {
        if self.servers == 0 || self.clients == 0 {
            return Err(ProtocolError::Invalid("need at least one server and one client".into()).into());
        }
        if self.secrets.len() != self.clients {
            return Err(ProtocolError::Invalid(format!(
                "{} secrets for {} clients",
                self.secrets.len(),
                self.clients
            ))
            .into());
        }
        let census = op.census().clone();
        let analyst = op.member("analyst")?;
        let servers = census.select(&self.server_names())?;
        let clients = census.select(&self.client_names())?;
        let server_census = servers.sub().clone();
        let client_census = clients.sub().clone();

        let secret = op.parallel(&clients, |c, _| {
            Ok(FieldElement::new(self.secrets[c.index()]))
        })?;
        let client_shares = op.parallel(&clients, |_, un| {
            let s = *un.facet(&secret)?;
            let shares = field_shares(server_census.len(), s, un.rng());
            Ok(Quire::new(server_census.clone(), shares).expect("one share per server"))
        })?;
        // Each server collects its share from every client.
        let server_shares = op.fanout(&servers, |op, server| {
            op.fanin(&clients, &server.alone(), |op, client| {
                let share = op.locally(client, |un| {
                    Ok(*un.facet(&client_shares)?.get(server.location()).expect("share per server"))
                })?;
                op.comm(client, server, &share)
            })
        })?;

        let rho = op.parallel(&servers, |s, un| Ok(self.draw_rho(s.index(), un.rng())?))?;
        let psi = op.parallel(&servers, |_, un| Ok(un.rng().random_range(MIN_SALT..MAX_SALT)))?;
        let alpha = op.parallel(&servers, |_, un| Ok(commit(*un.facet(&rho)?, *un.facet(&psi)?)))?;

        // Every server multicasts its own value to the other servers, in
        // server order. Commitments go out before any opening.
        let publish = |values: &Faceted<Value>, target: Option<TamperTarget>| {
            op.fanin(&servers, &servers, |op, server| {
                let mine = op.locally(server, |un| {
                    let v = un.facet(values)?.clone();
                    Ok(match (target, v) {
                        (Some(t), Value::Int(x)) if self.tampered(server_census.position(server.location()).unwrap_or(usize::MAX), t) => Value::Int(x + 1),
                        (_, v) => v,
                    })
                })?;
                op.multicast(server, &servers, &mine)
            })
        };
        let as_values = |f: &Faceted<i64>| op.parallel(&servers, |_, un| Ok(Value::Int(*un.facet(f)?)));
        let alpha_all = publish(&op.parallel(&servers, |_, un| Ok(un.facet(&alpha)?.to_value()))?, None)?;
        let psi_all = publish(&as_values(&psi)?, Some(TamperTarget::Psi))?;
        let rho_all = publish(&as_values(&rho)?, Some(TamperTarget::Rho))?;

        let opened = op.parallel(&servers, |me, un| {
            let alphas = un.unwrap(&alpha_all)?;
            let psis = un.unwrap(&psi_all)?;
            let rhos = un.unwrap(&rho_all)?;
            let mut rho_of = Vec::with_capacity(server_census.len());
            for s in server_census.iter() {
                let a = Commitment::from_value(alphas.get(s).expect("entry per server"))?;
                let r = rhos.get(s).expect("entry per server").as_int()?;
                let p = psis.get(s).expect("entry per server").as_int()?;
                if !verify(&a, r, p) {
                    return Err(ProtocolError::CommitmentFailed {
                        at: me.location().to_string(),
                        culprit: s.to_string(),
                    }
                    .into());
                }
                rho_of.push(r);
            }
            Ok(Quire::new(server_census.clone(), rho_of).expect("entry per server"))
        })?;

        let omega = op.parallel(&servers, |_, un| {
            Ok(expected_omega(un.facet(&opened)?.values(), client_census.len()) as i64)
        })?;
        let chosen = op.parallel(&servers, |_, un| {
            let w = *un.facet(&omega)? as usize;
            let mine = un.facet(&server_shares)?;
            mine.values()
                .get(w)
                .copied()
                .ok_or_else(|| ProtocolError::Invalid(format!("omega {w} out of range")).into())
        })?;
        let all_shares = op.fanin(&servers, &analyst.alone(), |op, server| {
            let mine = op.locally(server, |un| Ok(*un.facet(&chosen)?))?;
            op.comm(server, &analyst, &mine)
        })?;
        let revealed = op.locally(&analyst, |un| Ok(field_sum(un.unwrap(&all_shares)?.values())))?;
        Ok((revealed, omega, opened))
    }
}

/// Whether every server received all commitments before sending any opening.
///
/// Server-to-server streams carry the commitment first (sequence 0), then the
/// salt and the random value.
pub fn commitments_precede_openings(report: &RunReport, servers: &[Location]) -> std::result::Result<(), String> {
    for s in servers {
        let last_alpha = report
            .messages
            .iter()
            .filter(|m| m.receiver == *s && servers.contains(&m.sender) && m.seq == 0)
            .map(|m| m.received_at.ok_or_else(|| format!("commitment to `{s}` never received")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if last_alpha.len() != servers.len() - 1 {
            return Err(format!("`{s}` received {} commitments", last_alpha.len()));
        }
        let last_alpha = last_alpha.into_iter().max().unwrap_or(0);
        let first_open = report
            .messages
            .iter()
            .filter(|m| m.sender == *s && servers.contains(&m.receiver) && m.seq >= 1)
            .map(|m| m.sent_at)
            .min();
        if let Some(t) = first_open {
            if t <= last_alpha {
                return Err(format!("`{s}` opened at {t} before its last commitment arrived at {last_alpha}"));
            }
        }
    }
    Ok(())
}

/// The index the analyst's output should come from.
pub fn expected_omega(rhos: &[i64], clients: usize) -> usize {
    let sum = field_sum(&rhos.iter().map(|&r| FieldElement::new(r)).collect::<Vec<_>>());
    (sum.value() % clients as u64) as usize
}

pub fn secrets_by_name(l: &Lottery) -> BTreeMap<String, i64> {
    l.client_names().into_iter().zip(l.secrets.iter().copied()).collect()
}
