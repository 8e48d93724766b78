//! JSON system configs of the form `{"kind": ..., "params": {...}}`.

use std::path::Path;
use std::sync::Arc;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::derham::{
    bernoulli_equivalence_params, derived_system, minkowski_system, moebius_system, validate, LftMatrix,
};
use crate::error::{Error, Result};
use crate::rational::{parse_rational, rational_from_json, to_f64};
use crate::systems::{
    make_adf_exact, make_hata, make_kusuoka, make_kusuoka_from_harmonic, make_linear_exact, make_toy, DrivenSystem,
    ExactState, State, ToyParams, TOY_NAMES,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl SystemConfig {
    pub fn new(kind: &str, params: Value) -> Result<Self> {
        match params {
            Value::Object(params) => Ok(Self { kind: kind.into(), params }),
            Value::Null => Ok(Self { kind: kind.into(), params: Map::new() }),
            other => Err(Error::Config(format!("params must be an object, found {other}"))),
        }
    }
}

pub fn parse_config(text: &str) -> Result<SystemConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// One line of the built-in listing.
#[derive(Clone, Debug, Serialize)]
pub struct KindInfo {
    pub kind: String,
    pub description: &'static str,
    pub example: Value,
}

pub fn builtin_kinds() -> Vec<KindInfo> {
    let mut out = vec![
        info("adf", "harmonic restriction on the interval, G_0 = (2+y)/5", serde_json::json!({"y0": "0"})),
        info("kusuoka", "Kusuoka energy measure on the Sierpinski gasket", serde_json::json!({"y0": [1.0, 0.0]})),
        info(
            "derham_lft",
            "de Rham curve from linear fractional maps",
            serde_json::json!({"matrices": [[["1", "0"], ["1", "1"]], [["0", "1"], ["-1", "2"]]]}),
        ),
        info("minkowski", "Minkowski question-mark inverse as a de Rham curve", serde_json::json!({})),
        info("moebius", "de Rham system with the closed form x/(1 - C(x-1))", serde_json::json!({"N": 2, "C": "1"})),
        info(
            "bernoulli_equivalence",
            "de Rham system equivalent to a Bernoulli measure",
            serde_json::json!({"p": ["1/2", "1/2"], "e0": "1"}),
        ),
        info("linear", "self-similar (Bernoulli) measure", serde_json::json!({"weights": ["1/3", "2/3"]})),
        info("hata", "Hata tree harmonic restriction", serde_json::json!({"h_modulus_sq": 2.0, "alpha_modulus_sq": 0.5})),
    ];
    for name in TOY_NAMES {
        out.push(info(&format!("toy:{name}"), "toy example", serde_json::json!({})));
    }
    out
}

fn info(kind: &str, description: &'static str, example: Value) -> KindInfo {
    KindInfo { kind: kind.into(), description, example }
}

struct Params<'a> {
    kind: &'a str,
    map: &'a Map<String, Value>,
}

impl<'a> Params<'a> {
    fn allow(&self, keys: &[&str]) -> Result<()> {
        if let Some(k) = self.map.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "unknown parameter `{k}` for kind `{}` (expected {})",
                self.kind,
                if keys.is_empty() { "none".to_string() } else { keys.join(", ") }
            )));
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn rational(&self, key: &str) -> Result<Option<BigRational>> {
        self.get(key).map(|v| rational_from_json(v).map_err(|e| self.wrap(key, e))).transpose()
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| Error::Config(format!("kind `{}` needs parameter `{key}`", self.kind)))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        Ok(self.rational(key)?.map(|q| to_f64(&q)))
    }

    fn rationals(&self, key: &str) -> Result<Option<Vec<BigRational>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => {
                items.iter().map(|v| rational_from_json(v).map_err(|e| self.wrap(key, e))).collect::<Result<_>>().map(Some)
            }
            Some(other) => Err(Error::Config(format!("`{key}` must be an array, found {other}"))),
        }
    }

    fn floats<const K: usize>(&self, key: &str) -> Result<Option<[f64; K]>> {
        let Some(v) = self.rationals(key)? else { return Ok(None) };
        let v: Vec<f64> = v.iter().map(to_f64).collect();
        v.try_into().map(Some).map_err(|v: Vec<f64>| {
            Error::Config(format!("`{key}` needs {K} entries, found {}", v.len()))
        })
    }

    fn wrap(&self, key: &str, e: Error) -> Error {
        Error::Config(format!("parameter `{key}` of `{}`: {e}", self.kind))
    }
}

fn matrix_from_json(v: &Value, index: usize) -> Result<LftMatrix> {
    let bad = || Error::Config(format!("matrix {index} must be a 2x2 array of numbers or strings"));
    let rows = v.as_array().filter(|r| r.len() == 2).ok_or_else(bad)?;
    let mut out: Vec<[BigRational; 2]> = Vec::new();
    for row in rows {
        let r = row.as_array().filter(|r| r.len() == 2).ok_or_else(bad)?;
        out.push([rational_from_json(&r[0])?, rational_from_json(&r[1])?]);
    }
    let [r0, r1]: [[BigRational; 2]; 2] = out.try_into().map_err(|_| bad())?;
    Ok(LftMatrix::from_rows([r0, r1]))
}

fn exact_state_from_json(v: &Value) -> Result<ExactState> {
    if let Value::String(s) = v {
        if matches!(s.trim(), "inf" | "+inf" | "infinity" | "+infinity") {
            return Ok(ExactState::PosInf);
        }
    }
    Ok(ExactState::Finite(rational_from_json(v)?))
}

/// Builds and validates the system a config describes.
pub fn build_system(cfg: &SystemConfig) -> Result<DrivenSystem> {
    let (kind, toy) = match cfg.kind.split_once(':') {
        Some(("toy", name)) => ("toy", Some(name.to_string())),
        _ => (cfg.kind.as_str(), None),
    };
    let p = Params { kind: &cfg.kind, map: &cfg.params };
    let derham_y0 = |sys: DrivenSystem| -> Result<DrivenSystem> {
        match p.get("y0") {
            Some(v) => sys.with_initial_exact(exact_state_from_json(v)?),
            None => Ok(sys),
        }
    };
    match kind {
        "adf" => {
            p.allow(&["y0"])?;
            make_adf_exact(p.rational("y0")?.unwrap_or_default())
        }
        "kusuoka" => {
            p.allow(&["y0", "boundary"])?;
            match (p.floats::<2>("y0")?, p.floats::<3>("boundary")?) {
                (Some(_), Some(_)) => Err(Error::Config("give either `y0` or `boundary`, not both".into())),
                (Some(y), None) => make_kusuoka(y),
                (None, Some(b)) => make_kusuoka_from_harmonic(b),
                (None, None) => make_kusuoka([1.0, 0.0]),
            }
        }
        "derham_lft" => {
            p.allow(&["matrices", "y0"])?;
            let ms = p.require("matrices", p.get("matrices"))?;
            let ms = ms.as_array().ok_or_else(|| Error::Config("`matrices` must be an array".into()))?;
            let ms = ms.iter().enumerate().map(|(i, m)| matrix_from_json(m, i)).collect::<Result<Vec<_>>>()?;
            derham_y0(derived_system(&Arc::new(validate(&ms)?))?)
        }
        "minkowski" => {
            p.allow(&["y0"])?;
            derham_y0(derived_system(&Arc::new(minkowski_system()))?)
        }
        "moebius" => {
            p.allow(&["N", "C", "y0"])?;
            let n = match p.get("N") {
                None => 2,
                Some(v) => v.as_u64().filter(|&n| n >= 2).ok_or_else(|| Error::Config("`N` must be an integer ≥ 2".into()))?
                    as usize,
            };
            let c = p.rational("C")?.unwrap_or_else(|| parse_rational("1").expect("literal"));
            derham_y0(derived_system(&Arc::new(moebius_system(n, &c)?))?)
        }
        "bernoulli_equivalence" => {
            p.allow(&["p", "e0", "y0"])?;
            let weights = p.require("p", p.rationals("p")?)?;
            let e0 = p.require("e0", p.rational("e0")?)?;
            let ms = bernoulli_equivalence_params(&weights, &e0)?;
            derham_y0(derived_system(&Arc::new(validate(&ms)?))?)
        }
        "linear" => {
            p.allow(&["weights"])?;
            make_linear_exact(&p.require("weights", p.rationals("weights")?)?)
        }
        "hata" => {
            p.allow(&["h_modulus_sq", "alpha_modulus_sq"])?;
            make_hata(
                p.require("h_modulus_sq", p.f64("h_modulus_sq")?)?,
                p.require("alpha_modulus_sq", p.f64("alpha_modulus_sq")?)?,
            )
        }
        "toy" => {
            let name = match toy {
                Some(n) => {
                    p.allow(&["p", "epsilon", "y0"])?;
                    n
                }
                None => {
                    p.allow(&["name", "p", "epsilon", "y0"])?;
                    p.require("name", p.get("name").and_then(Value::as_str))?.to_string()
                }
            };
            let params = ToyParams { p: p.rational("p")?, epsilon: p.rational("epsilon")?, y0: p.rational("y0")? };
            make_toy(&name, &params)
        }
        other => Err(Error::Config(format!(
            "unknown kind `{other}` (expected adf, kusuoka, derham_lft, minkowski, moebius, bernoulli_equivalence, linear, hata or toy)"
        ))),
    }
}

/// Replaces the initial state with one given on the command line: a
/// rational (or `inf`) for scalar systems, `a,b` for circle states.
pub fn override_initial(system: &DrivenSystem, text: &str) -> Result<DrivenSystem> {
    if let Some((a, b)) = text.split_once(',') {
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad coordinate `{s}`: {e}")));
        return system.with_initial(State::Circle([parse(a)?, parse(b)?]));
    }
    let y = exact_state_from_json(&Value::String(text.into()))?;
    if system.exact().is_some() {
        system.with_initial_exact(y)
    } else {
        system.with_initial(y.to_state())
    }
}
