from typing import Optional, Any, List, Dict
from enum import Enum, auto


class ErrorCode(Enum):
    """Error codes for simulation operations"""
    INVALID_CONFIG = auto()
    SCHEDULING = auto()
    REGISTRATION = auto()
    NOT_REGISTERED = auto()
    REGISTRY_UNAVAILABLE = auto()
    NO_INSTANCE = auto()
    NOT_ROUTED = auto()
    CONFIG_NOT_FOUND = auto()
    INVALID_TOPIC = auto()
    ROVER_MISMATCH = auto()
    INVALID_SCRIPT = auto()
    REPORT_ERROR = auto()


class SimulationError(Exception):
    """Base exception for simulation operations"""
    def __init__(self, message: str, details: Optional[str] = None, code: Optional[ErrorCode] = None):
        self.message = message
        self.details = details
        self.code = code
        super().__init__(self.message)

    def __str__(self) -> str:
        """String representation of the error"""
        error_str = self.message
        if self.details:
            error_str += f" ({self.details})"
        if self.code:
            error_str = f"[{self.code.name}] {error_str}"
        return error_str


class ConfigurationError(SimulationError):
    """Raised when a configuration value breaks its invariants"""
    def __init__(self, message: str, field: Optional[str] = None, value: Any = None):
        details = f"Field: {field}, Value: {value!r}" if field else None
        super().__init__(message, details, ErrorCode.INVALID_CONFIG)


class SchedulingError(SimulationError):
    """Raised when the virtual clock is asked to go backwards"""
    def __init__(self, message: str, now_ms: Optional[int] = None, requested_ms: Optional[int] = None):
        details = f"Now: {now_ms} ms, Requested: {requested_ms} ms" if now_ms is not None else None
        super().__init__(message, details, ErrorCode.SCHEDULING)


class RegistrationError(SimulationError):
    """Raised when an instance record fails validation"""
    def __init__(self, message: str, service_id: Optional[str] = None, instance_id: Optional[str] = None,
                 address: Optional[str] = None):
        details = f"Instance: {service_id}/{instance_id}"
        if address is not None:
            details += f", Address: {address!r}"
        super().__init__(message, details, ErrorCode.REGISTRATION)


class NotRegisteredError(SimulationError):
    """Raised on heartbeat from an instance the registry does not hold; caller must re-register"""
    def __init__(self, service_id: str, instance_id: str):
        super().__init__("Instance not registered", f"Instance: {service_id}/{instance_id}",
                         ErrorCode.NOT_REGISTERED)
        self.service_id = service_id
        self.instance_id = instance_id


class RegistryUnavailableError(SimulationError):
    """Raised when the registry cannot be reached"""
    def __init__(self, message: str = "Registry unreachable"):
        super().__init__(message, None, ErrorCode.REGISTRY_UNAVAILABLE)


class NoInstanceAvailableError(SimulationError):
    """Raised when a balancer has no healthy instance to hand out"""
    def __init__(self, service_id: str, listed: int = 0):
        super().__init__("No instance available", f"Service: {service_id}, Listed: {listed}",
                         ErrorCode.NO_INSTANCE)
        self.service_id = service_id


class NotRoutedError(SimulationError):
    """Raised when the gateway has no route for a service id"""
    def __init__(self, service_id: str, known_routes: Optional[List[str]] = None):
        details = f"Service: {service_id}"
        if known_routes is not None:
            details += f", Routes: {known_routes}"
        super().__init__("No route for service", details, ErrorCode.NOT_ROUTED)
        self.service_id = service_id


class ConfigNotFoundError(SimulationError):
    """Raised when a configuration key is absent"""
    def __init__(self, service_id: str, key: str):
        super().__init__("Configuration key not found", f"Key: {service_id}.{key}", ErrorCode.CONFIG_NOT_FOUND)


class TopicError(SimulationError):
    """Raised when a broker topic is malformed"""
    def __init__(self, topic: str):
        super().__init__("Malformed topic", f"Topic: {topic!r}", ErrorCode.INVALID_TOPIC)


class RoverMismatchError(SimulationError):
    """Raised when a command is applied to the wrong rover"""
    def __init__(self, rover_id: str, command_rover_id: str):
        super().__init__("Command addressed to another rover",
                         f"Rover: {rover_id}, Command rover: {command_rover_id}", ErrorCode.ROVER_MISMATCH)


class ScriptValidationError(SimulationError):
    """Raised when a scenario script is malformed or references unknown instances"""
    def __init__(self, message: str, script: Optional[str] = None, context: Optional[Dict[str, Any]] = None):
        details = f"Script: {script}" if script else None
        if context:
            details = f"{details}, Context: {context}" if details else f"Context: {context}"
        super().__init__(message, details, ErrorCode.INVALID_SCRIPT)


class ReportWriteError(SimulationError):
    """Raised when a report cannot be written"""
    def __init__(self, message: str, path: Optional[str] = None):
        details = f"Path: {path}" if path else None
        super().__init__(message, details, ErrorCode.REPORT_ERROR)
