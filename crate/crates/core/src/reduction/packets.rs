//! Customer packets: groups of nearby customers solved as one demand point.
//!
//! A packet's demand is the sum of its members' demands. Its effective
//! distance to a site is the demand-weighted mean of the members' distances,
//! so `demand * distance` reproduces the members' transport cost exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kmeans::{distinct_count, kmeans_weighted};
use super::ReductionError;
use crate::geo::{DistanceMatrix, GeoPoint, Metric, MILES_PER_DEGREE};
use crate::math;
use crate::model::{Customer, Site};

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: String,
    pub member_ids: Vec<String>,
    pub member_demands: Vec<f64>,
    /// Demand-weighted centroid of the members (plain mean at zero demand).
    pub point: GeoPoint,
    pub demand: f64,
    /// State held by most members; ties go to the state of the
    /// highest-demand member.
    pub state: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PacketSpec {
    TargetCount(usize),
    /// Greedy grouping of customers within this many miles of a seed.
    Radius(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketSet {
    pub packets: Vec<Packet>,
    /// Packet index per input customer.
    pub customer_packet: Vec<usize>,
    /// One packet per customer because the target was not below the
    /// customer count.
    pub identity: bool,
    /// The target exceeded the number of distinct locations and was reduced.
    pub clamped: bool,
}

/// Groups `customers` into packets.
///
/// `TargetCount(t)` with `t >= customers.len()` packs each customer alone
/// (`identity` is set). Otherwise weighted k-means with `k = t` forms the
/// groups. `Radius(r)` visits customers by decreasing demand; each
/// unassigned customer seeds a packet that absorbs every unassigned
/// customer within `r` great-circle miles of it.
pub fn build_packets(
    customers: &[Customer],
    spec: PacketSpec,
    seed: u64,
) -> Result<PacketSet, ReductionError> {
    if customers.is_empty() {
        return Err(ReductionError::NoCustomers);
    }
    let n = customers.len();
    let (groups, identity, clamped) = match spec {
        PacketSpec::TargetCount(0) => return Err(ReductionError::ZeroK),
        PacketSpec::TargetCount(t) if t >= n => ((0..n).map(|i| vec![i]).collect(), true, false),
        PacketSpec::TargetCount(t) => {
            let points: Vec<GeoPoint> = customers.iter().map(|c| c.point).collect();
            let mut weights: Vec<f64> = customers.iter().map(|c| c.demand).collect();
            if !weights.iter().any(|w| *w > 0.0) {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            let k = t.min(distinct_count(&points));
            let r = kmeans_weighted(&points, &weights, k, seed, 300, 1e-9)?;
            let mut groups = vec![Vec::new(); k];
            for (i, &c) in r.assignment.iter().enumerate() {
                groups[c].push(i);
            }
            groups.retain(|g| !g.is_empty());
            (groups, false, k < t)
        }
        PacketSpec::Radius(r) => {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ReductionError::Radius(r));
            }
            (radius_groups(customers, r), false, false)
        }
    };

    let mut customer_packet = vec![0usize; n];
    let packets = groups
        .iter()
        .enumerate()
        .map(|(p, members)| {
            for &i in members {
                customer_packet[i] = p;
            }
            make_packet(format!("pk{}", p + 1), members, customers)
        })
        .collect();
    Ok(PacketSet {
        packets,
        customer_packet,
        identity,
        clamped,
    })
}

fn make_packet(id: String, members: &[usize], customers: &[Customer]) -> Packet {
    let demand: f64 = members.iter().map(|&i| customers[i].demand).sum();
    let point = if let [only] = members {
        customers[*only].point
    } else {
        GeoPoint::weighted_mean(
            members
                .iter()
                .map(|&i| (customers[i].point, customers[i].demand)),
        )
        .or_else(|| GeoPoint::weighted_mean(members.iter().map(|&i| (customers[i].point, 1.0))))
        .expect("packets are non-empty")
    };

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in members {
        *counts.entry(customers[i].state.as_str()).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let heaviest = members
        .iter()
        .copied()
        .filter(|&i| counts[customers[i].state.as_str()] == top)
        .fold(None::<usize>, |best, i| match best {
            Some(b) if customers[b].demand >= customers[i].demand => Some(b),
            _ => Some(i),
        })
        .expect("packets are non-empty");

    Packet {
        id,
        member_ids: members.iter().map(|&i| customers[i].id.clone()).collect(),
        member_demands: members.iter().map(|&i| customers[i].demand).collect(),
        point,
        demand,
        state: customers[heaviest].state.clone(),
    }
}

fn radius_groups(customers: &[Customer], radius: f64) -> Vec<Vec<usize>> {
    let n = customers.len();
    // Narrowest longitude spacing in the data, so a cell never spans more
    // than `radius` miles east-west anywhere.
    let max_abs_lat = customers
        .iter()
        .map(|c| c.point.lat().abs())
        .fold(0.0, f64::max);
    let xscale = MILES_PER_DEGREE * math::cos(max_abs_lat.to_radians()).max(1e-6);
    let cell = |c: &Customer| -> (i64, i64) {
        (
            math::floor(c.point.lon() * xscale / radius) as i64,
            math::floor(c.point.lat() * MILES_PER_DEGREE / radius) as i64,
        )
    };
    let mut grid: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, c) in customers.iter().enumerate() {
        grid.entry(cell(c)).or_default().push(i);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        customers[b]
            .demand
            .total_cmp(&customers[a].demand)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; n];
    let mut groups = Vec::new();
    for &s in &order {
        if taken[s] {
            continue;
        }
        let (cx, cy) = cell(&customers[s]);
        let mut members = Vec::new();
        for gx in cx - 2..=cx + 2 {
            for gy in cy - 2..=cy + 2 {
                for &i in grid.get(&(gx, gy)).map(Vec::as_slice).unwrap_or(&[]) {
                    if !taken[i]
                        && Metric::Haversine.distance(customers[s].point, customers[i].point)
                            <= radius
                    {
                        members.push(i);
                    }
                }
            }
        }
        members.sort_unstable();
        for &i in &members {
            taken[i] = true;
        }
        groups.push(members);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactDistance {
    pub miles: f64,
    /// The packet has no demand; `miles` is the plain mean.
    pub unweighted: bool,
}

/// Demand-weighted mean of the members' distances to one site.
pub fn packet_exact_distance(
    packet: &Packet,
    distances_to_members: &[f64],
) -> Result<ExactDistance, ReductionError> {
    if distances_to_members.len() != packet.member_demands.len() {
        return Err(ReductionError::MemberDistances {
            packet: packet.id.clone(),
            members: packet.member_demands.len(),
            distances: distances_to_members.len(),
        });
    }
    if let [d] = distances_to_members {
        return Ok(ExactDistance {
            miles: *d,
            unweighted: packet.demand <= 0.0,
        });
    }
    if packet.demand > 0.0 {
        let weighted: f64 = packet
            .member_demands
            .iter()
            .zip(distances_to_members)
            .map(|(w, d)| w * d)
            .sum();
        Ok(ExactDistance {
            miles: weighted / packet.demand,
            unweighted: false,
        })
    } else {
        let sum: f64 = distances_to_members.iter().sum();
        Ok(ExactDistance {
            miles: sum / distances_to_members.len() as f64,
            unweighted: true,
        })
    }
}

fn member_indices(
    packet: &Packet,
    index: &BTreeMap<&str, usize>,
) -> Result<Vec<usize>, ReductionError> {
    packet
        .member_ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| ReductionError::UnknownCustomer(id.clone()))
        })
        .collect()
}

/// Packets × sites matrix of exact effective distances.
pub fn packet_distance_matrix(
    packets: &[Packet],
    customers: &[Customer],
    sites: &[Site],
    metric: Metric,
) -> Result<DistanceMatrix, ReductionError> {
    let index: BTreeMap<&str, usize> = customers
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let mut data = Vec::with_capacity(packets.len() * sites.len());
    let mut buf = Vec::new();
    for p in packets {
        let members = member_indices(p, &index)?;
        for s in sites {
            buf.clear();
            buf.extend(
                members
                    .iter()
                    .map(|&i| metric.distance(customers[i].point, s.point)),
            );
            data.push(packet_exact_distance(p, &buf)?.miles);
        }
    }
    DistanceMatrix::from_row_major(packets.len(), sites.len(), data)
        .map_err(|_| ReductionError::NoCustomers)
}

/// Packets × sites matrix (row-major) of the demand fraction of each packet
/// lying within `radius` miles of each site.
pub fn packet_coverage_matrix(
    packets: &[Packet],
    customers: &[Customer],
    sites: &[Site],
    metric: Metric,
    radius: f64,
) -> Result<Vec<f64>, ReductionError> {
    let index: BTreeMap<&str, usize> = customers
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let mut out = Vec::with_capacity(packets.len() * sites.len());
    for p in packets {
        let members = member_indices(p, &index)?;
        for s in sites {
            let within = |i: usize| metric.distance(customers[i].point, s.point) <= radius;
            let frac = if p.demand > 0.0 {
                members
                    .iter()
                    .filter(|&&i| within(i))
                    .map(|&i| customers[i].demand)
                    .sum::<f64>()
                    / p.demand
            } else {
                members.iter().filter(|&&i| within(i)).count() as f64 / members.len() as f64
            };
            out.push(frac.min(1.0));
        }
    }
    Ok(out)
}

/// Packets as plain customers, for building a formulation over them.
pub fn packets_as_customers(packets: &[Packet]) -> Vec<Customer> {
    packets
        .iter()
        .map(|p| Customer {
            id: p.id.clone(),
            point: p.point,
            demand: p.demand,
            state: p.state.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(id: &str, lat: f64, lon: f64, d: f64, st: &str) -> Customer {
        Customer::new(id, GeoPoint::new(lat, lon).unwrap(), d, st).unwrap()
    }

    #[test]
    fn exact_distance_of_three_members() {
        let custs = [
            c("a", 40.0, -75.0, 2.0, "X"),
            c("b", 40.1, -75.0, 3.0, "X"),
            c("d", 40.2, -75.0, 5.0, "X"),
        ];
        let p = make_packet("p".into(), &[0, 1, 2], &custs);
        assert_eq!(p.demand, 10.0);
        let d = packet_exact_distance(&p, &[10.0, 20.0, 30.0]).unwrap();
        assert!((d.miles - 23.0).abs() < 1e-12);
        assert!(!d.unweighted);
        assert!((p.demand * d.miles - 230.0).abs() < 1e-12);
    }

    #[test]
    fn zero_demand_packet_is_flagged() {
        let custs = [c("a", 40.0, -75.0, 0.0, "X"), c("b", 41.0, -75.0, 0.0, "X")];
        let p = make_packet("p".into(), &[0, 1], &custs);
        assert_eq!(p.point, GeoPoint::new(40.5, -75.0).unwrap());
        let d = packet_exact_distance(&p, &[4.0, 6.0]).unwrap();
        assert_eq!(
            d,
            ExactDistance {
                miles: 5.0,
                unweighted: true
            }
        );
    }

    #[test]
    fn majority_state_with_tie_break() {
        let custs = [
            c("a", 40.0, -75.0, 1.0, "X"),
            c("b", 40.0, -75.1, 9.0, "Y"),
            c("d", 40.0, -75.2, 2.0, "X"),
        ];
        assert_eq!(make_packet("p".into(), &[0, 1, 2], &custs).state, "X");
        assert_eq!(make_packet("p".into(), &[0, 1], &custs).state, "Y");
    }

    #[test]
    fn identity_when_target_not_below_count() {
        let custs = [c("a", 40.0, -75.0, 1.0, "X"), c("b", 41.0, -75.0, 2.0, "X")];
        for t in [2, 5] {
            let set = build_packets(&custs, PacketSpec::TargetCount(t), 42).unwrap();
            assert!(set.identity);
            assert_eq!(set.packets.len(), 2);
            assert_eq!(set.packets[1].point, custs[1].point);
        }
    }

    #[test]
    fn radius_groups_nearby_customers() {
        let custs = [
            c("a", 40.0, -75.0, 5.0, "X"),
            c("b", 40.01, -75.0, 1.0, "X"),
            c("d", 42.0, -75.0, 1.0, "X"),
        ];
        let set = build_packets(&custs, PacketSpec::Radius(5.0), 0).unwrap();
        assert_eq!(set.packets.len(), 2);
        assert_eq!(set.customer_packet, vec![0, 0, 1]);
        assert!(build_packets(&custs, PacketSpec::Radius(-1.0), 0).is_err());
    }
}
