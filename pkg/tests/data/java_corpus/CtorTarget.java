package corpus.ctortarget;

import java.net.URL;

public class CtorTarget {
    private final URL endpoint;
    private boolean insecure;

    public CtorTarget(URL endpoint, boolean insecure) {
        if (endpoint == null) {
            throw new IllegalArgumentException("endpoint required");
        }
        this.endpoint = endpoint;
        this.insecure = insecure;
    }

    public URL endpoint() {
        return endpoint;
    }
}
