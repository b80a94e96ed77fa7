from .latency import LatencyReport, LatencyStamps, LoopbackScenario, SimulatedScenario, VirtualClock, measure_latency
from .server import ChatServer, Connection, handle_connection, serve
from .wire import WireMessage, decode, encode
