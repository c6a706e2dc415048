"""smellwatch: microservice bad-smell detection over traces, resource
metrics, and business invocation counters."""

__version__ = "0.1.0"
