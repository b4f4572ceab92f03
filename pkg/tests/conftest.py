import pytest

from saczyzzyva.messages import RequestMsg, signed
from saczyzzyva.node import RecordingEnv
from saczyzzyva.scenario import ScenarioConfig, Workload
from saczyzzyva.simnet import Simulator


class Cluster:
    """Replicas and keys from a real simulator, each driven by hand through a RecordingEnv."""

    def __init__(self, variant="saczyzzyva", f=1, clients=2, **kw):
        cfg = ScenarioConfig(variant=variant, f=f, workload=Workload(clients=clients, requests=0), **kw)
        self.sim = Simulator(cfg)
        self.genesis = self.sim.genesis
        self.replicas = self.sim.replicas
        self.envs = {}
        for r in self.replicas:
            env = RecordingEnv()
            r.start(env)
            self.envs[r.id] = env

    def request(self, client, rid, op=b"incr x"):
        return signed(RequestMsg(op, client, rid), self.sim.clients[client].keys.secret)

    def sent(self, node, cls):
        return self.envs[node].of_type(cls)

    def clear(self):
        for env in self.envs.values():
            env.take()


@pytest.fixture
def cluster():
    return Cluster()


def pump(c, drop=lambda src, dst, msg: False, limit=100_000):
    """Deliver replica-bound messages until nothing is in flight; return what clients got."""
    to_clients = []
    for _ in range(limit):
        moved = False
        for src, env in c.envs.items():
            for dst, msg in env.take():
                moved = True
                if drop(src, dst, msg):
                    continue
                if isinstance(dst, int):
                    c.replicas[dst].on_message(src, msg)
                else:
                    to_clients.append((src, dst, msg))
        if not moved:
            return to_clients
    raise AssertionError("messages still in flight")


# acceptance verdicts, printed one per line at the end of the session
VERDICTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
