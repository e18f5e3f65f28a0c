"""Base workflow class for flylora experiments."""

import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional, Tuple

from ..actions.base_action import ActionContext, ActionError, BaseAction, ConditionalAction

logger = logging.getLogger(__name__)


class BaseWorkflow(ABC):
    """Abstract base class for all workflows."""

    def __init__(self, name: str, description: str = ""):
        self.name = name
        self.description = description
        self.actions: List[BaseAction] = []

    @abstractmethod
    def build_actions(self) -> List[BaseAction]:
        """
        Build the list of actions for this workflow.

        Returns:
            List of actions to execute in order
        """
        pass

    def execute(self, config: Any, initial_data: Optional[Dict[str, Any]] = None) -> Any:
        """
        Execute the workflow with the given experiment configuration.

        Args:
            config: ExperimentConfig shared by every action
            initial_data: Initial data for the workflow

        Returns:
            Final workflow output (see get_final_output)

        Raises:
            WorkflowError: If workflow execution fails
        """
        context = ActionContext(
            data=dict(initial_data or {}),
            config=config,
            metadata={'workflow_name': self.name},
        )

        if not self.actions:
            self.actions = self.build_actions()

        for i, action in enumerate(self.actions):
            logger.info("Executing action %d/%d: %s", i + 1, len(self.actions), action.name)

            if not action.can_execute(context):
                logger.warning("Skipping action '%s' - requirements not met", action.name)
                continue

            try:
                context = action.execute(context)
            except ActionError as e:
                if self.should_continue_on_error(action, e):
                    logger.warning("%s - continuing workflow", e)
                    continue
                raise WorkflowError(self.name, str(e), e) from e
            except Exception as e:
                raise WorkflowError(self.name, f"Unexpected error in action '{action.name}': {e}", e) from e

        return self.get_final_output(context)

    def should_continue_on_error(self, action: BaseAction, error: ActionError) -> bool:
        """By default, stop on any error."""
        return False

    def get_final_output(self, context: ActionContext) -> Any:
        return context.data

    def __str__(self) -> str:
        return f"{self.__class__.__name__}(name='{self.name}')"

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name='{self.name}', actions={len(self.actions)})"


class WorkflowError(Exception):
    """Exception raised when a workflow fails to execute."""

    def __init__(self, workflow_name: str, message: str, original_error: Optional[Exception] = None):
        self.workflow_name = workflow_name
        self.original_error = original_error
        super().__init__(f"Workflow '{workflow_name}' failed: {message}")

    @property
    def root_cause(self) -> Optional[Exception]:
        """Innermost wrapped error, unwrapping action and workflow layers."""
        error = self.original_error
        while isinstance(error, (ActionError, WorkflowError)) and error.original_error is not None:
            error = error.original_error
        return error


class SequentialWorkflow(BaseWorkflow):
    """Workflow that executes actions in sequence."""

    def __init__(self, name: str, actions: List[BaseAction], description: str = ""):
        super().__init__(name, description)
        self.actions = actions

    def build_actions(self) -> List[BaseAction]:
        return self.actions


class ConditionalWorkflow(BaseWorkflow):
    """Workflow that executes actions based on conditions."""

    def __init__(self, name: str, action_conditions: List[Tuple[Callable[[ActionContext], bool], BaseAction]],
                 description: str = ""):
        """
        Initialize conditional workflow.

        Args:
            name: Workflow name
            action_conditions: List of (condition_func, action) tuples
            description: Workflow description
        """
        super().__init__(name, description)
        self.action_conditions = action_conditions

    def build_actions(self) -> List[BaseAction]:
        return [
            ConditionalAction(
                name=f"conditional_{action.name}",
                condition_func=condition_func,
                action=action,
                description=f"Conditional execution of {action.name}",
            )
            for condition_func, action in self.action_conditions
        ]
