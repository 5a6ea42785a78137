use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use nalgebra::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::modulus;
use crate::{Error, Real, Result};

/// Multiset of complex poles, closed under conjugation when built through
/// [`PoleSet::new`] or parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet<T> {
    poles: Vec<Complex<T>>,
}

pub(crate) fn sort_complex<T: Real>(v: &mut [Complex<T>]) {
    v.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

fn conj_tol<T: Real>(z: &Complex<T>) -> T {
    T::lit(T::PLACEMENT_TOL) * (T::one() + modulus(z))
}

impl<T: Real> PoleSet<T> {
    pub fn empty() -> Self {
        Self { poles: Vec::new() }
    }

    /// Validated constructor; rejects sets that are not conjugate-closed.
    pub fn new(poles: Vec<Complex<T>>) -> Result<Self> {
        if poles.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::BadPoleSet("non-finite pole".into()));
        }
        let set = Self { poles };
        if !set.is_conjugate_closed() {
            return Err(Error::BadPoleSet(format!(
                "{set} is not closed under complex conjugation"
            )));
        }
        Ok(set)
    }

    pub fn real(values: &[T]) -> Self {
        Self {
            poles: values.iter().map(|&v| Complex::new(v, T::zero())).collect(),
        }
    }

    pub(crate) fn from_values_unchecked(poles: Vec<Complex<T>>) -> Self {
        Self { poles }
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex<T>> {
        self.poles.iter()
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.poles
    }

    pub fn spectral_radius(&self) -> T {
        self.poles
            .iter()
            .map(modulus)
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn sorted(&self) -> Self {
        let mut poles = self.poles.clone();
        sort_complex(&mut poles);
        Self { poles }
    }

    pub fn is_conjugate_closed(&self) -> bool {
        let mut used = vec![false; self.poles.len()];
        for i in 0..self.poles.len() {
            if used[i] {
                continue;
            }
            let z = self.poles[i];
            let tol = conj_tol(&z);
            if z.im.abs() <= tol {
                used[i] = true;
                continue;
            }
            let partner = (0..self.poles.len()).find(|&j| {
                j != i && !used[j] && modulus(&(self.poles[j] - z.conj())) <= tol
            });
            match partner {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => return false,
            }
        }
        true
    }

    /// Union of two pole multisets.
    pub fn union(&self, other: &Self) -> Self {
        let mut poles = self.poles.clone();
        poles.extend_from_slice(&other.poles);
        Self { poles }
    }

    /// Largest distance under a greedy nearest-neighbour pairing, or
    /// infinity when the cardinalities differ.
    pub fn matching_error(&self, other: &Self) -> T {
        if self.len() != other.len() {
            return T::lit(f64::INFINITY);
        }
        let mut want = self.poles.clone();
        sort_complex(&mut want);
        let mut used = vec![false; other.len()];
        let mut worst = T::zero();
        for z in &want {
            let (j, d) = other
                .poles
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, w)| (j, modulus(&(w - z))))
                .fold((usize::MAX, T::lit(f64::INFINITY)), |acc, x| {
                    if x.1 < acc.1 {
                        x
                    } else {
                        acc
                    }
                });
            used[j] = true;
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// Smallest distance between two poles of the set.
    pub fn min_separation(&self) -> T {
        let mut best = T::lit(f64::INFINITY);
        for i in 0..self.poles.len() {
            for j in i + 1..self.poles.len() {
                let d = modulus(&(self.poles[i] - self.poles[j]));
                if d < best {
                    best = d;
                }
            }
        }
        best
    }

    pub fn to_f64(&self) -> Vec<(f64, f64)> {
        self.poles.iter().map(|z| (z.re.as_f64(), z.im.as_f64())).collect()
    }

    /// Parses comma-separated complex literals such as `0.39,0.4233+0.099i,0.4233-0.099i`.
    pub fn parse(s: &str) -> Result<Self> {
        let poles = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(parse_complex::<T>)
            .collect::<Result<Vec<_>>>()?;
        Self::new(poles)
    }
}

impl<T> Index<usize> for PoleSet<T> {
    type Output = Complex<T>;
    fn index(&self, i: usize) -> &Complex<T> {
        &self.poles[i]
    }
}

impl<'a, T> IntoIterator for &'a PoleSet<T> {
    type Item = &'a Complex<T>;
    type IntoIter = std::slice::Iter<'a, Complex<T>>;
    fn into_iter(self) -> Self::IntoIter {
        self.poles.iter()
    }
}

impl<T: Real> FromStr for PoleSet<T> {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl<T: Real> fmt::Display for PoleSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, z) in self.poles.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if z.im == T::zero() {
                write!(f, "{}", z.re)?;
            } else if z.im > T::zero() {
                write!(f, "{}+{}i", z.re, z.im)?;
            } else {
                write!(f, "{}{}i", z.re, z.im)?;
            }
        }
        write!(f, "}}")
    }
}

fn parse_complex<T: Real>(s: &str) -> Result<Complex<T>> {
    let bad = || Error::BadPoleSet(format!("cannot parse `{s}` as a complex literal"));
    let num = |t: &str| -> Result<f64> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => t.parse::<f64>().map_err(|_| bad()),
        }
    };
    let (re, im) = match s.strip_suffix('i') {
        None => (s.parse::<f64>().map_err(|_| bad())?, 0.0),
        Some(body) => {
            let bytes = body.as_bytes();
            let split = (1..bytes.len()).rev().find(|&k| {
                (bytes[k] == b'+' || bytes[k] == b'-')
                    && !matches!(bytes[k - 1], b'e' | b'E')
            });
            match split {
                Some(k) => (num(&body[..k])?, num(&body[k..])?),
                None => (0.0, num(body)?),
            }
        }
    };
    if !re.is_finite() || !im.is_finite() {
        return Err(bad());
    }
    Ok(Complex::new(T::lit(re), T::lit(im)))
}

/// Real monic polynomial with the given roots, constant term first.
pub fn poly_from_roots<T: Real>(roots: &PoleSet<T>) -> Vec<T> {
    let mut c: Vec<Complex<T>> = vec![Complex::new(T::one(), T::zero())];
    for &z in roots.iter() {
        let mut next = vec![Complex::new(T::zero(), T::zero()); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= ck * z;
        }
        c = next;
    }
    c.into_iter().map(|z| z.re).collect()
}

impl<T: Real> Serialize for PoleSet<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[T; 2]> = self.poles.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for PoleSet<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[T; 2]>::deserialize(d)?;
        Ok(Self {
            poles: pairs.into_iter().map(|[re, im]| Complex::new(re, im)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_real_and_complex_literals() {
        let p: PoleSet<f64> = "-0.5378, 0.4233+0.0990i, 0.4233-0.0990i, 0.0304,0.1249"
            .parse()
            .unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p[1], Complex::new(0.4233, 0.099));
        assert_eq!(p[2], Complex::new(0.4233, -0.099));
        let q: PoleSet<f64> = "1e-3+2e-1i,1e-3-2e-1i".parse().unwrap();
        assert_eq!(q[0], Complex::new(1e-3, 0.2));
        let r: PoleSet<f64> = "i,-i".parse().unwrap();
        assert_eq!(r[1], Complex::new(0.0, -1.0));
    }

    #[test]
    fn rejects_missing_conjugate() {
        assert!(matches!(
            "0.1+0.2i".parse::<PoleSet<f64>>(),
            Err(Error::BadPoleSet(_))
        ));
        assert!(matches!("abc".parse::<PoleSet<f64>>(), Err(Error::BadPoleSet(_))));
    }

    #[test]
    fn poly_of_conjugate_pair_is_real() {
        let p: PoleSet<f64> = "0.5+0.5i,0.5-0.5i".parse().unwrap();
        let c = poly_from_roots(&p);
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] + 1.0).abs() < 1e-15 && c[2] == 1.0);
    }

    #[test]
    fn matching_ignores_order() {
        let a = PoleSet::<f64>::real(&[0.1, 0.2, 0.3]);
        let b = PoleSet::real(&[0.3, 0.1, 0.2 + 1e-12]);
        assert!(a.matching_error(&b) < 2e-12);
        assert!(a.matching_error(&PoleSet::real(&[0.1])).is_infinite());
    }
}
