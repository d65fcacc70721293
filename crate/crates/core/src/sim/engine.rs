use crate::network::{NetworkSpec, PrimitiveStreams};
use crate::planner::StaticPlan;
use crate::policy::{make_plan, PolicyParams};

use super::{EventKind, PeriodRecord, PolicyKind, Residuals, Sample, Trajectory, COMPLETION_SNAP};

/// Work-conserving comparison disciplines. Both are preemptive-resume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    /// Serve the eligible buffer earliest in the `h_i / y_i` order.
    Priority,
    /// Serve the eligible buffer with the most jobs; ties by priority order.
    LongestQueue,
}

impl Discipline {
    fn kind(self) -> PolicyKind {
        match self {
            Discipline::Priority => PolicyKind::Priority,
            Discipline::LongestQueue => PolicyKind::LongestQueue,
        }
    }
}

struct Engine<'a> {
    net: &'a NetworkSpec,
    y: &'a [f64],
    pi: &'a [f64],
    streams: PrimitiveStreams,
    server_activities: Vec<Vec<usize>>,
    t: f64,
    z: Vec<i64>,
    arrivals: Vec<u64>,
    routed: Vec<u64>,
    completions: Vec<u64>,
    busy: Vec<f64>,
    idle: Vec<f64>,
    /// Remaining service of the job held by each activity.
    residual: Vec<Option<f64>>,
    next_arrival: Vec<Option<f64>>,
    /// Activity currently working on each server.
    active: Vec<Option<usize>>,
    cost: f64,
    samples: Vec<Sample>,
}

impl<'a> Engine<'a> {
    fn new(net: &'a NetworkSpec, plan: &'a StaticPlan, z0: Vec<i64>, seed: u64, replication: u64) -> Self {
        let m = net.num_buffers();
        let n = net.num_activities();
        let p = net.num_servers();
        let mut streams = PrimitiveStreams::new(net, seed, replication);
        let next_arrival = (0..m).map(|k| streams.draw_interarrival(k).ok()).collect();
        let mut server_activities = vec![Vec::new(); p];
        for j in 0..n {
            server_activities[net.activity_server[j]].push(j);
        }
        let mut eng = Engine {
            net,
            y: &plan.y,
            pi: &plan.pi,
            streams,
            server_activities,
            t: 0.0,
            z: z0,
            arrivals: vec![0; m],
            routed: vec![0; m],
            completions: vec![0; n],
            busy: vec![0.0; n],
            idle: vec![0.0; p],
            residual: vec![None; n],
            next_arrival,
            active: vec![None; p],
            cost: 0.0,
            samples: Vec::new(),
        };
        eng.record(EventKind::Start, None);
        eng
    }

    fn record(&mut self, kind: EventKind, index: Option<usize>) {
        let w = super::compute_workload(&self.z, self.y);
        let i_w = self.pi.iter().zip(&self.idle).map(|(p, i)| p * i).sum();
        self.samples.push(Sample {
            t: self.t,
            kind,
            index,
            z: self.z.clone(),
            arrivals: self.arrivals.clone(),
            routed: self.routed.clone(),
            completions: self.completions.clone(),
            busy: self.busy.clone(),
            idle: self.idle.clone(),
            w,
            i_w,
            cost: self.cost,
        });
    }

    fn advance(&mut self, to: f64) {
        let dt = to - self.t;
        assert!(dt >= 0.0, "time went backwards: {} -> {to}", self.t);
        if dt > 0.0 {
            self.cost += self.z.iter().zip(&self.net.holding_cost).map(|(&z, h)| z as f64 * h).sum::<f64>() * dt;
            for s in 0..self.active.len() {
                match self.active[s] {
                    Some(j) => {
                        self.busy[j] += dt;
                        let r = self.residual[j].as_mut().expect("working activity holds a job");
                        *r -= dt;
                    }
                    None => self.idle[s] += dt,
                }
            }
        }
        self.t = to;
    }

    /// Earliest pending arrival or completion.
    fn next_primitive_event(&self) -> f64 {
        let arrivals = self.next_arrival.iter().flatten().copied();
        let completions = self
            .active
            .iter()
            .flatten()
            .map(|&j| self.t + self.residual[j].expect("working activity holds a job").max(0.0));
        arrivals.chain(completions).fold(f64::INFINITY, f64::min)
    }

    fn process_arrivals(&mut self) {
        for k in 0..self.next_arrival.len() {
            while let Some(at) = self.next_arrival[k] {
                if at > self.t {
                    break;
                }
                self.z[k] += 1;
                self.arrivals[k] += 1;
                let gap = self.streams.draw_interarrival(k).expect("arriving buffer has a stream");
                self.next_arrival[k] = Some(at + gap);
                self.record(EventKind::Arrival, Some(k));
            }
        }
    }

    /// Completes every working activity whose residual has run out, in
    /// activity order. Returns the completed activities.
    fn process_completions(&mut self) -> Vec<usize> {
        let mut done = Vec::new();
        for j in 0..self.residual.len() {
            let s = self.net.activity_server[j];
            if self.active[s] != Some(j) || self.residual[j].is_none_or(|r| r > COMPLETION_SNAP) {
                continue;
            }
            let i = self.net.activity_buffer[j];
            assert!(self.z[i] > 0, "completion at activity {j} from empty buffer {i}");
            self.z[i] -= 1;
            self.completions[j] += 1;
            self.residual[j] = None;
            self.active[s] = None;
            if let Some(dest) = self.streams.draw_route(j) {
                self.z[dest] += 1;
                self.routed[dest] += 1;
            }
            self.record(EventKind::Completion, Some(j));
            done.push(j);
        }
        done
    }

    /// Jobs in buffer `i` not held by an activity other than `j`.
    fn claimable(&self, i: usize, j: usize) -> i64 {
        let held = (0..self.residual.len())
            .filter(|&k| k != j && self.net.activity_buffer[k] == i && self.residual[k].is_some())
            .count() as i64;
        self.z[i] - held
    }

    fn can_work(&self, j: usize) -> bool {
        self.residual[j].is_some() || self.claimable(self.net.activity_buffer[j], j) > 0
    }

    /// Resumes the held job of `j` or starts the next one from its buffer.
    fn start_or_resume(&mut self, j: usize) -> bool {
        if !self.can_work(j) {
            return false;
        }
        if self.residual[j].is_none() {
            self.residual[j] = Some(self.streams.draw_service(j));
        }
        self.active[self.net.activity_server[j]] = Some(j);
        true
    }

    fn residuals(&self) -> Residuals {
        Residuals {
            interarrival: self.next_arrival.iter().map(|a| a.map_or(0.0, |a| (a - self.t).max(0.0))).collect(),
            service: self.residual.iter().map(|r| r.map_or(0.0, |r| r.max(0.0))).collect(),
        }
    }

    fn finish(mut self, policy: PolicyKind, seed: u64, replication: u64, horizon: f64, z0: Vec<i64>, periods: Vec<PeriodRecord>) -> Trajectory {
        self.record(EventKind::Horizon, None);
        Trajectory { policy, seed, replication, horizon, z0, samples: self.samples, periods }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    activity: usize,
    start: f64,
    end: f64,
}

#[derive(Debug, Default)]
struct ServerSchedule {
    segments: Vec<Segment>,
    cursor: usize,
    begun: bool,
}

impl ServerSchedule {
    fn next_boundary(&self) -> f64 {
        match self.segments.get(self.cursor) {
            Some(seg) if self.begun => seg.end,
            Some(seg) => seg.start,
            None => f64::INFINITY,
        }
    }

    fn current(&self) -> Option<Segment> {
        self.segments.get(self.cursor).filter(|_| self.begun).copied()
    }
}

struct Period {
    end: f64,
    schedules: Vec<ServerSchedule>,
    caps: Vec<u64>,
    processed: Vec<u64>,
}

impl Period {
    fn empty(p: usize, n: usize) -> Self {
        Period { end: 0.0, schedules: (0..p).map(|_| ServerSchedule::default()).collect(), caps: vec![0; n], processed: vec![0; n] }
    }
}

fn try_run(eng: &mut Engine, period: &mut Period, j: usize) {
    if period.processed[j] < period.caps[j] && eng.start_or_resume(j) {
        period.processed[j] += 1;
    }
}

/// Opens and closes segments whose boundary has been reached.
fn handle_boundaries(eng: &mut Engine, period: &mut Period) {
    for s in 0..period.schedules.len() {
        let mut changed = false;
        loop {
            let sched = &mut period.schedules[s];
            let Some(seg) = sched.segments.get(sched.cursor).copied() else { break };
            if !sched.begun {
                if seg.start > eng.t {
                    break;
                }
                sched.begun = true;
                changed = true;
                try_run(eng, period, seg.activity);
            } else {
                if seg.end > eng.t {
                    break;
                }
                // preempt; the held job keeps its residual
                if eng.active[s] == Some(seg.activity) {
                    eng.active[s] = None;
                }
                sched.cursor += 1;
                sched.begun = false;
                changed = true;
            }
        }
        if changed {
            eng.record(EventKind::Boundary, Some(s));
        }
    }
}

/// Simulates the discrete review policy from `Z(0) = round(theta)`.
pub fn run_dr_trajectory(
    net: &NetworkSpec,
    plan: &StaticPlan,
    params: &PolicyParams,
    horizon: f64,
    seed: u64,
    replication: u64,
) -> Trajectory {
    let z0: Vec<i64> = params.theta.iter().map(|t| t.round() as i64).collect();
    let mut eng = Engine::new(net, plan, z0.clone(), seed, replication);
    let p = net.num_servers();
    let n = net.num_activities();
    let mut period = Period::empty(p, n);
    let mut periods: Vec<PeriodRecord> = Vec::new();

    loop {
        if eng.t >= period.end {
            let q: Vec<f64> = eng.z.iter().map(|&z| z as f64).collect();
            let review = make_plan(&q, params, plan).expect("state is a valid nonnegative vector");
            eng.record(EventKind::Review, None);
            let end = eng.t + review.exec_time;
            let window = eng.t + review.idle_time;
            let mut schedules: Vec<ServerSchedule> = (0..p).map(|_| ServerSchedule::default()).collect();
            for (s, sched) in schedules.iter_mut().enumerate() {
                let mut start = window;
                for &j in &eng.server_activities[s] {
                    let d = review.activity_time[j];
                    if d > 0.0 {
                        let seg_end = (start + d).min(end);
                        sched.segments.push(Segment { activity: j, start: start.min(end), end: seg_end });
                        start = seg_end;
                    }
                }
            }
            period = Period { end, schedules, caps: review.job_cap.clone(), processed: vec![0; n] };
            periods.push(PeriodRecord {
                k: periods.len(),
                tau: eng.t,
                plan: review,
                residuals: Some(eng.residuals()),
                sample: eng.samples.len() - 1,
            });
            handle_boundaries(&mut eng, &mut period);
        }
        if eng.t >= horizon {
            break;
        }
        let boundary = period.schedules.iter().map(ServerSchedule::next_boundary).fold(f64::INFINITY, f64::min);
        let next = eng.next_primitive_event().min(boundary).min(period.end).min(horizon);
        eng.advance(next);
        eng.process_arrivals();
        for j in eng.process_completions() {
            let s = net.activity_server[j];
            if period.schedules[s].current().is_some_and(|seg| seg.activity == j && seg.end > eng.t) {
                try_run(&mut eng, &mut period, j);
            }
        }
        handle_boundaries(&mut eng, &mut period);
    }
    eng.finish(PolicyKind::Dr, seed, replication, horizon, z0, periods)
}

fn dispatch(eng: &mut Engine, discipline: Discipline, rank: &[usize]) {
    for s in 0..eng.active.len() {
        let current = eng.active[s];
        let mut best: Option<usize> = None;
        for &j in &eng.server_activities[s] {
            if !eng.can_work(j) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (ij, ib) = (eng.net.activity_buffer[j], eng.net.activity_buffer[b]);
                    match discipline {
                        Discipline::Priority => rank[ij] < rank[ib],
                        Discipline::LongestQueue => {
                            eng.z[ij] > eng.z[ib]
                                || (eng.z[ij] == eng.z[ib] && current == Some(j))
                                || (eng.z[ij] == eng.z[ib] && current != Some(b) && rank[ij] < rank[ib])
                        }
                    }
                }
            };
            if better {
                best = Some(j);
            }
        }
        if best != current {
            eng.active[s] = None;
            if let Some(j) = best {
                eng.start_or_resume(j);
            }
        }
    }
}

/// Simulates a work-conserving preemptive baseline from an empty system.
pub fn run_baseline_trajectory(
    net: &NetworkSpec,
    plan: &StaticPlan,
    horizon: f64,
    seed: u64,
    replication: u64,
    discipline: Discipline,
) -> Trajectory {
    let z0 = vec![0; net.num_buffers()];
    let mut eng = Engine::new(net, plan, z0.clone(), seed, replication);
    let mut rank = vec![0; net.num_buffers()];
    for (pos, &i) in plan.buffer_permutation.iter().enumerate() {
        rank[i] = pos;
    }
    loop {
        dispatch(&mut eng, discipline, &rank);
        if eng.t >= horizon {
            break;
        }
        let next = eng.next_primitive_event().min(horizon);
        eng.advance(next);
        eng.process_arrivals();
        eng.process_completions();
    }
    eng.finish(discipline.kind(), seed, replication, horizon, z0, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::test_nets::{net_a, net_b, with_all_laws};
    use crate::network::DistributionSpec;
    use crate::policy::Case;

    fn deterministic_a() -> NetworkSpec {
        with_all_laws(net_a(), DistributionSpec::deterministic())
    }

    #[test]
    fn deterministic_single_station() {
        let net = deterministic_a();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(5.0, &plan).unwrap();
        let traj = run_dr_trajectory(&net, &plan, &params, 25.0, 1, 0);
        let last = traj.samples.last().unwrap();
        assert_eq!(traj.z0, vec![25]);
        assert_eq!(last.arrivals, vec![25]);
        assert!(last.completions[0] >= 20);
        assert!(traj.samples.iter().all(|s| s.z[0] >= 0 && s.z[0] <= 30));
        assert_eq!(traj.ledger_residual(&net), 0);
    }

    #[test]
    fn ledger_and_capacity_net_b() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(20.0, &plan).unwrap();
        let traj = run_dr_trajectory(&net, &plan, &params, 2000.0, 7, 3);
        assert_eq!(traj.ledger_residual(&net), 0);
        for w in traj.samples.windows(2) {
            let dt = w[1].t - w[0].t;
            assert!(dt >= 0.0);
            assert!(w[1].z.iter().all(|&z| z >= 0));
            for s in 0..2 {
                let db: f64 = (0..3).filter(|&j| net.activity_server[j] == s).map(|j| w[1].busy[j] - w[0].busy[j]).sum();
                assert!(db <= dt + 1e-9);
                assert!((db + w[1].idle[s] - w[0].idle[s] - dt).abs() < 1e-9);
            }
            assert!(w[1].i_w >= w[0].i_w);
        }
        assert!(traj.periods.len() > 10);
        assert_eq!(traj.periods[0].tau, 0.0);
        for w in traj.periods.windows(2) {
            assert!((w[1].tau - w[0].tau - w[0].plan.exec_time).abs() < 1e-9);
        }
    }

    #[test]
    fn dr_is_deterministic() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(10.0, &plan).unwrap();
        let a = run_dr_trajectory(&net, &plan, &params, 300.0, 11, 2);
        let b = run_dr_trajectory(&net, &plan, &params, 300.0, 11, 2);
        assert_eq!(a, b);
        let c = run_dr_trajectory(&net, &plan, &params, 300.0, 11, 3);
        assert_ne!(a.samples.last(), c.samples.last());
    }

    #[test]
    fn first_review_is_case_one() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(100.0, &plan).unwrap();
        let traj = run_dr_trajectory(&net, &plan, &params, 50.0, 1, 0);
        assert_eq!(traj.periods[0].plan.case_tag, Case::One);
        assert_eq!(traj.z0, vec![1080, 1080]);
    }

    #[test]
    fn baseline_serves_single_arrival_at_once() {
        let net = deterministic_a();
        let plan = StaticPlan::build(&net).unwrap();
        let traj = run_baseline_trajectory(&net, &plan, 1.5, 1, 0, Discipline::Priority);
        // arrival at t = 1 is served immediately; idle only before it
        let last = traj.samples.last().unwrap();
        assert_eq!(last.arrivals, vec![1]);
        assert!((last.idle[0] - 1.0).abs() < 1e-12);
        assert!((last.busy[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn priority_baseline_prefers_cheap_buffer() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let traj = run_baseline_trajectory(&net, &plan, 500.0, 5, 0, Discipline::Priority);
        assert_eq!(traj.ledger_residual(&net), 0);
        // whenever buffer 1 has a job not held elsewhere, server 2 is not on activity 3
        for w in traj.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.t > a.t && a.z[0] >= 2 {
                assert!(b.busy[2] - a.busy[2] <= 1e-12, "server 2 served buffer 2 at t={}", a.t);
            }
        }
    }

    #[test]
    fn baselines_are_work_conserving() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        for d in [Discipline::Priority, Discipline::LongestQueue] {
            let traj = run_baseline_trajectory(&net, &plan, 500.0, 9, 1, d);
            assert_eq!(traj.ledger_residual(&net), 0);
            for w in traj.samples.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                // server 2 can serve both buffers; any two jobs keep it busy
                if b.t > a.t && a.z[0] + a.z[1] >= 2 {
                    assert!(b.idle[1] - a.idle[1] <= 1e-12);
                }
            }
        }
    }
}
