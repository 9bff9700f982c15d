package org.flow.engine;

public class ErrorReporter {
    private final Sink sink;

    public void report(Error error, State state) {
        String message = "error in state " + state + ": " + error;
        sink.write(message);
    }

    public void reportAll(List<Error> errors, State state) {
        for (Error error : errors) {
            report(error, state);
        }
    }
}
