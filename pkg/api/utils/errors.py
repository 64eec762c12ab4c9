"""
Error Handlers

Maps library errors to JSON error bodies (error, message, remediation,
details) with matching HTTP status codes.
"""

import logging
from typing import Dict, Optional, Tuple, Type

from fastapi import Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from lib.errors import (
    ConfigMismatchError,
    CoverageError,
    EmptyLayerError,
    InfeasibleTargetError,
    InsufficientDataError,
    InvalidCandidateError,
    NoTeachersError,
    PhaseFailedError,
    PruningError,
    RunLockedError,
    ShapeMismatchError,
    UnsupportedArchitectureError,
)

logger = logging.getLogger(__name__)


# Error Response Helper
def create_error_response(
    error_code: str, message: str, remediation: str = None, details: dict = None
) -> dict:
    """
    Create standardized error response.

    Args:
        error_code: Machine-readable error code
        message: Human-readable error message
        remediation: Suggested fix (optional)
        details: Additional error details (optional)

    Returns:
        Standardized error response dict
    """
    response = {"error": error_code, "message": message}

    if remediation:
        response["remediation"] = remediation

    if details:
        response["details"] = details

    return response


# (status, error code, remediation), most specific class first
ERROR_TABLE: Dict[Type[PruningError], Tuple[int, str, Optional[str]]] = {
    RunLockedError: (
        status.HTTP_409_CONFLICT,
        "run_locked",
        "Wait for the running pipeline to finish or remove a stale .lock file",
    ),
    ConfigMismatchError: (
        status.HTTP_409_CONFLICT,
        "config_mismatch",
        "Use a new run directory or resubmit the original config",
    ),
    InfeasibleTargetError: (
        status.HTTP_422_UNPROCESSABLE_ENTITY,
        "infeasible_target",
        "Lower search.target_rate",
    ),
    InsufficientDataError: (
        status.HTTP_422_UNPROCESSABLE_ENTITY,
        "insufficient_data",
        "Lower splits.per_class_subset or splits.per_class_val",
    ),
    UnsupportedArchitectureError: (
        status.HTTP_422_UNPROCESSABLE_ENTITY,
        "unsupported_architecture",
        "Use one of the registered architectures",
    ),
    ShapeMismatchError: (status.HTTP_422_UNPROCESSABLE_ENTITY, "shape_mismatch", None),
    InvalidCandidateError: (status.HTTP_422_UNPROCESSABLE_ENTITY, "invalid_candidate", None),
    EmptyLayerError: (status.HTTP_422_UNPROCESSABLE_ENTITY, "empty_layer", None),
    NoTeachersError: (
        status.HTTP_409_CONFLICT,
        "no_teachers",
        "Run the search phase before building the memory bank",
    ),
    CoverageError: (status.HTTP_409_CONFLICT, "coverage_error", None),
    PhaseFailedError: (
        status.HTTP_500_INTERNAL_SERVER_ERROR,
        "phase_failed",
        "Partial results are kept in the run directory; fix the cause and resubmit to resume",
    ),
}


def error_info(exc: PruningError) -> Tuple[int, str, Optional[str]]:
    for cls in type(exc).__mro__:
        if cls in ERROR_TABLE:
            return ERROR_TABLE[cls]
    return status.HTTP_500_INTERNAL_SERVER_ERROR, "pruning_error", None


# FastAPI Exception Handlers
async def pruning_error_handler(request: Request, exc: PruningError) -> JSONResponse:
    """Handle library errors"""
    status_code, code, remediation = error_info(exc)
    logger.error(f"{type(exc).__name__}: {exc.message}", extra={"metadata": exc.details})

    return JSONResponse(
        status_code=status_code,
        content=create_error_response(
            error_code=code,
            message=exc.message,
            remediation=remediation,
            details=exc.details,
        ),
    )


async def validation_error_handler(
    request: Request, exc: RequestValidationError
) -> JSONResponse:
    """Handle Pydantic validation errors"""
    logger.warning(f"Validation error: {exc.errors()}")

    # Extract field-level errors
    errors = []
    for error in exc.errors():
        field = " -> ".join(str(loc) for loc in error["loc"])
        errors.append({"field": field, "message": error["msg"], "type": error["type"]})

    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content=create_error_response(
            error_code="validation_error",
            message="Request validation failed",
            remediation="Check the run config against GET /presets/schema",
            details={"errors": errors},
        ),
    )


async def generic_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    """Handle unexpected exceptions"""
    logger.exception("Unexpected error occurred", exc_info=exc)

    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content=create_error_response(
            error_code="internal_server_error",
            message="An unexpected error occurred",
            remediation="Check the service logs",
        ),
    )


# Register all exception handlers
def register_exception_handlers(app):
    """
    Register all custom exception handlers with the FastAPI app.

    Args:
        app: FastAPI application instance
    """
    app.add_exception_handler(PruningError, pruning_error_handler)
    app.add_exception_handler(RequestValidationError, validation_error_handler)
    app.add_exception_handler(Exception, generic_exception_handler)

    logger.info("Exception handlers registered")
