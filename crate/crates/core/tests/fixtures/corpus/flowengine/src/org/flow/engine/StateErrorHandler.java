package org.flow.engine;

public class StateErrorHandler {
    private final List<StateError> errors = new ArrayList<>();
    private final Logger log;

    public void onStateError(State state, Error error) {
        log.error("state error", error);
        errors.add(new StateError(state, error));
    }

    public boolean hasStateError(State state) {
        return errors.stream().anyMatch(error -> error.state() == state);
    }

    public void clearErrors() {
        errors.clear();
    }
}
